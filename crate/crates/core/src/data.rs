//! Dataset ingestion (IDX, PGM, CSV), pixel scaling into `(-1, 1)`, masks
//! and train/test splitting.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, ParseErrorKind, Result};
use crate::random::seeded;

/// Scaled pixels stay this far inside the open interval.
pub const SCALE_MARGIN: f64 = 1e-6;

/// Maps a pixel value in `[0, maxval]` into `(-1, 1)`.
#[inline]
pub fn scale(p: f64, maxval: u32) -> f64 {
    (2.0 * p / maxval as f64 - 1.0) * (1.0 - SCALE_MARGIN)
}

/// Continuous inverse of [`scale`].
#[inline]
pub fn unscale(u: f64, maxval: u32) -> f64 {
    (u / (1.0 - SCALE_MARGIN) + 1.0) * maxval as f64 / 2.0
}

/// Inverse of [`scale`] rounded back to an integer pixel value.
pub fn unscale_pixel(u: f64, maxval: u32) -> u32 {
    unscale(u, maxval).round().clamp(0.0, maxval as f64) as u32
}

/// `N` observations of `K(0)` values each, with optional observation masks
/// (`true` = observed).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Vec<f64>>,
    pub masks: Option<Vec<Vec<bool>>>,
    /// `(height, width)` when the rows are images.
    pub image_shape: Option<(usize, usize)>,
    /// Pixel range the values were scaled from.
    pub maxval: u32,
}

impl Dataset {
    pub fn new(observations: Vec<Vec<f64>>, image_shape: Option<(usize, usize)>, maxval: u32) -> Result<Self> {
        let d = Self {
            observations,
            masks: None,
            image_shape,
            maxval,
        };
        d.validate()?;
        Ok(d)
    }

    /// Builds a dataset from raw pixel values in `[0, maxval]`.
    pub fn from_pixels(pixels: &[Vec<f64>], image_shape: Option<(usize, usize)>, maxval: u32) -> Result<Self> {
        let obs = pixels
            .iter()
            .map(|row| row.iter().map(|&p| scale(p, maxval)).collect())
            .collect();
        Self::new(obs, image_shape, maxval)
    }

    /// A dataset with `width` columns and no rows; useful for prior runs.
    pub fn empty(width: usize) -> Self {
        Self {
            observations: Vec::new(),
            masks: None,
            image_shape: None,
            maxval: 255,
        }
        .with_width(width)
    }

    fn with_width(mut self, width: usize) -> Self {
        self.image_shape = Some((1, width));
        self
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn width(&self) -> usize {
        match (self.observations.first(), self.image_shape) {
            (Some(row), _) => row.len(),
            (None, Some((h, w))) => h * w,
            (None, None) => 0,
        }
    }

    #[inline]
    pub fn is_observed(&self, n: usize, k: usize) -> bool {
        self.masks.as_ref().is_none_or(|m| m[n][k])
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.width();
        if let Some((h, w)) = self.image_shape {
            if h * w != width {
                return Err(Error::param("image_shape", format!("{h}x{w} does not match width {width}")));
            }
        }
        for (n, row) in self.observations.iter().enumerate() {
            if row.len() != width {
                return Err(Error::param("observations", format!("row {n} has length {}", row.len())));
            }
            if let Some(u) = row.iter().find(|u| !(u.abs() < 1.0)) {
                return Err(Error::param("observations", format!("row {n} holds {u} outside (-1, 1)")));
            }
        }
        if let Some(masks) = &self.masks {
            if masks.len() != self.len() || masks.iter().any(|m| m.len() != width) {
                return Err(Error::param("masks", "shape differs from observations"));
            }
        }
        Ok(())
    }

    pub fn with_masks(mut self, masks: Vec<Vec<bool>>) -> Result<Self> {
        self.masks = Some(masks);
        self.validate()?;
        Ok(self)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            masks: self
                .masks
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i].clone()).collect()),
            image_shape: self.image_shape,
            maxval: self.maxval,
        }
    }

    /// Per-column mean of the observations.
    pub fn column_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.width()];
        for row in &self.observations {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Marks the top `ceil(height / 2)` rows of every image observed and the rest
/// missing.
pub fn mask_bottom_half(dataset: &Dataset) -> Result<Dataset> {
    let (h, w) = dataset
        .image_shape
        .ok_or_else(|| Error::param("image_shape", "bottom-half masking needs an image shape"))?;
    let keep = h.div_ceil(2);
    let mask: Vec<bool> = (0..h * w).map(|i| i / w < keep).collect();
    dataset.clone().with_masks(vec![mask; dataset.len()])
}

/// Seeded shuffle followed by a cut after `n_train` items.
pub fn split(dataset: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train > dataset.len() {
        return Err(Error::param(
            "n_train",
            format!("{n_train} exceeds the {} available observations", dataset.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut seeded(seed));
    Ok((dataset.subset(&idx[..n_train]), dataset.subset(&idx[n_train..])))
}

fn parse_err(format: &'static str, kind: ParseErrorKind, offset: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        format,
        kind,
        offset,
        reason: reason.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX file of unsigned-byte images (magic `0x00000803`).
pub fn load_idx(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_idx(&read(path.as_ref())?)
}

pub fn parse_idx(bytes: &[u8]) -> Result<Dataset> {
    const FMT: &str = "IDX";
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| parse_err(FMT, ParseErrorKind::Truncated, bytes.len(), "header ends early"))
    };
    let magic = word(0)?;
    if magic != 0x0000_0803 {
        return Err(parse_err(FMT, ParseErrorKind::BadMagic, 0, format!("magic {magic:#010x}")));
    }
    let (n, rows, cols) = (word(4)? as usize, word(8)? as usize, word(12)? as usize);
    let total = n
        .checked_mul(rows)
        .and_then(|x| x.checked_mul(cols))
        .and_then(|x| x.checked_add(16))
        .ok_or_else(|| parse_err(FMT, ParseErrorKind::DimensionOverflow, 4, format!("{n}x{rows}x{cols}")))?;
    if bytes.len() < total {
        return Err(parse_err(
            FMT,
            ParseErrorKind::Truncated,
            bytes.len(),
            format!("expected {total} bytes"),
        ));
    }
    let size = rows * cols;
    let obs = (0..n)
        .map(|i| {
            bytes[16 + i * size..16 + (i + 1) * size]
                .iter()
                .map(|&p| scale(p as f64, 255))
                .collect()
        })
        .collect();
    Dataset::new(obs, Some((rows, cols)), 255)
}

/// Serializes raw byte images into IDX.
pub fn write_idx(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for w in [0x0000_0803u32, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&w.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

/// Reads a single grayscale PGM image (P2 or P5).
pub fn load_pgm(path: impl AsRef<Path>) -> Result<Dataset> {
    let img = parse_pgm(&read(path.as_ref())?)?;
    Dataset::from_pixels(&[img.pixels], Some((img.height, img.width)), img.maxval)
}

/// Decoded PGM raster.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u32,
    pub pixels: Vec<f64>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            let kind = if self.pos >= self.bytes.len() {
                ParseErrorKind::Truncated
            } else {
                ParseErrorKind::Malformed
            };
            return Err(parse_err("PGM", kind, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err("PGM", ParseErrorKind::DimensionOverflow, start, format!("{what} too large")))
    }
}

pub fn parse_pgm(bytes: &[u8]) -> Result<PgmImage> {
    const FMT: &str = "PGM";
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(parse_err(FMT, ParseErrorKind::BadMagic, 0, "expected P2 or P5")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(FMT, ParseErrorKind::Malformed, maxval_at, format!("maxval {maxval}")));
    }
    let maxval = maxval as u32;
    let count = width
        .checked_mul(height)
        .ok_or_else(|| parse_err(FMT, ParseErrorKind::DimensionOverflow, 2, "image too large"))?;
    let mut pixels = Vec::with_capacity(count);
    if binary {
        let start = cur.pos + 1;
        let depth = if maxval < 256 { 1 } else { 2 };
        let need = count.checked_mul(depth).and_then(|x| x.checked_add(start));
        match need {
            Some(end) if end <= bytes.len() => {}
            _ => {
                return Err(parse_err(FMT, ParseErrorKind::Truncated, bytes.len(), "raster ends early"));
            }
        }
        for i in 0..count {
            let at = start + i * depth;
            let v = if depth == 1 {
                bytes[at] as u32
            } else {
                u16::from_be_bytes([bytes[at], bytes[at + 1]]) as u32
            };
            if v > maxval {
                return Err(parse_err(FMT, ParseErrorKind::Malformed, at, format!("sample {v} exceeds maxval")));
            }
            pixels.push(v as f64);
        }
    } else {
        for _ in 0..count {
            let at = cur.pos;
            let v = cur.number("sample")?;
            if v > maxval as u64 {
                return Err(parse_err(FMT, ParseErrorKind::Malformed, at, format!("sample {v} exceeds maxval")));
            }
            pixels.push(v as f64);
        }
    }
    Ok(PgmImage {
        width,
        height,
        maxval,
        pixels,
    })
}

/// Binary PGM encoding of values in `(-1, 1)`.
pub fn encode_pgm(values: &[f64], height: usize, width: usize, maxval: u32) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    for &u in values {
        let p = unscale_pixel(u, maxval);
        if maxval < 256 {
            out.push(p as u8);
        } else {
            out.extend_from_slice(&(p as u16).to_be_bytes());
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, values: &[f64], height: usize, width: usize, maxval: u32) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(values, height, width, maxval)).map_err(|e| Error::io(path, e))
}

/// Loads every `.pgm` in a directory (sorted by name) as one dataset.
pub fn load_pgm_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    let mut rows = Vec::new();
    let mut shape = None;
    let mut maxval = 255;
    for p in &paths {
        let img = parse_pgm(&read(p)?)?;
        if shape.is_some_and(|s| s != (img.height, img.width)) {
            return Err(Error::param("images", format!("{} differs in size", p.display())));
        }
        shape = Some((img.height, img.width));
        maxval = img.maxval;
        rows.push(img.pixels);
    }
    Dataset::from_pixels(&rows, shape, maxval)
}

/// One image per row of raw pixel values in `[0, 255]`. An optional first
/// line `# width,height` records the image shape.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    const FMT: &str = "CSV";
    let mut shape = None;
    let mut rows = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(h) = t.strip_prefix('#') {
            let dims: Vec<usize> = h.split(',').filter_map(|x| x.trim().parse().ok()).collect();
            if let [w, h] = dims[..] {
                shape = Some((h, w));
            }
            continue;
        }
        let row: Vec<f64> = t
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| (0.0..=255.0).contains(v))
                    .ok_or_else(|| parse_err(FMT, ParseErrorKind::Malformed, at, format!("bad pixel `{x}`")))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    Dataset::from_pixels(&rows, shape, 255)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

/// Inverse of [`parse_csv`]: integer pixels, with the shape line when known.
pub fn to_csv(dataset: &Dataset) -> String {
    let mut out = String::new();
    if let Some((h, w)) = dataset.image_shape {
        out.push_str(&format!("# {w},{h}\n"));
    }
    for row in &dataset.observations {
        let line: Vec<String> = row.iter().map(|&u| unscale_pixel(u, dataset.maxval).to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Mask file: CSV of `0`/`1` entries, one row per observation.
pub fn parse_mask_csv(text: &str) -> Result<Vec<Vec<bool>>> {
    let mut offset = 0;
    let mut out = Vec::new();
    for line in text.split_inclusive('\n') {
        let at = offset;
        offset += line.len();
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            t.split(',')
                .map(|x| match x.trim() {
                    "1" => Ok(true),
                    "0" => Ok(false),
                    other => Err(parse_err("mask", ParseErrorKind::Malformed, at, format!("bad entry `{other}`"))),
                })
                .collect::<Result<_>>()?,
        );
    }
    Ok(out)
}

pub fn mask_to_csv(masks: &[Vec<bool>]) -> String {
    masks
        .iter()
        .map(|m| m.iter().map(|&b| if b { "1" } else { "0" }).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

/// Picks a loader from the path: a directory of PGMs, `.pgm`, `.csv`, or IDX
/// otherwise.
pub fn load_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if path.is_dir() {
        return load_pgm_dir(path);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm(path),
        Some("csv") => load_csv(path),
        _ => load_idx(path),
    }
}

/// Pixel values of the synthetic bars images.
pub const BAR_ON: f64 = 230.0;
pub const BAR_OFF: f64 = 25.0;

/// `side x side` images where each horizontal and each vertical bar is lit
/// independently with probability `p_on`, plus small integer noise.
pub fn bars<R: Rng + ?Sized>(count: usize, side: usize, p_on: f64, rng: &mut R) -> Dataset {
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let horiz: Vec<bool> = (0..side).map(|_| rng.random::<f64>() < p_on).collect();
        let vert: Vec<bool> = (0..side).map(|_| rng.random::<f64>() < p_on).collect();
        let mut img = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let base = if horiz[r] || vert[c] { BAR_ON } else { BAR_OFF };
                let noise = rng.random_range(-10i32..=10) as f64;
                img.push((base + noise).clamp(0.0, 255.0));
            }
        }
        rows.push(img);
    }
    Dataset::from_pixels(&rows, Some((side, side)), 255).expect("bars are well-formed")
}
