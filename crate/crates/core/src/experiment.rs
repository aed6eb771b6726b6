//! Experiment drivers: training runs with thinned checkpoints and a progress
//! log, bottom-half reconstruction by posterior averaging, fantasies and
//! feature maps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::data::{encode_pgm, load_path, unscale, Dataset};
use crate::error::{Error, Result};
use crate::hypers::HyperParameters;
use crate::mcmc::{progress_line, resample_datum, sweep, SweepConfig, SweepStats, Topology, PROGRESS_HEADER};
use crate::network::{
    activation_of, ancestral_layers, ancestral_sample, clamp_state, sigmoid, unit_mean, LayerParameters, ModelState,
    NetworkStructure, STATE_LIMIT,
};
use crate::random::stream;

/// Name of the marker left in an output directory when a run aborts.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Sweeps between resumable full-state checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub sweep: SweepConfig,
    pub hypers: HyperParameters,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sweeps: 1000,
            burn_in: 500,
            thin: 10,
            checkpoint_every: 0,
            sweep: SweepConfig::default(),
            hypers: HyperParameters::default(),
            train_path: None,
            test_path: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps > 0 && self.burn_in >= self.sweeps {
            return Err(Error::param("burn_in", "must be smaller than sweeps"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin", "must be at least 1"));
        }
        self.sweep.validate()?;
        self.hypers.validate()
    }
}

/// Everything a training run produces in memory.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Thinned post-burn-in samples (structure, parameters, hypers).
    pub samples: Vec<Checkpoint>,
    pub final_state: ModelState,
    pub totals: SweepStats,
    /// Layer widths after every sweep.
    pub width_trace: Vec<Vec<usize>>,
}

/// Loads the training set named in `config` and runs [`train_on`].
pub fn train<R: Rng + ?Sized>(config: &RunConfig, rng: &mut R) -> Result<TrainOutput> {
    let path = config
        .train_path
        .as_ref()
        .ok_or_else(|| Error::param("train_path", "no training data given"))?;
    train_on(Arc::new(load_path(path)?), config, rng)
}

struct Outputs {
    dir: PathBuf,
    progress: BufWriter<File>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let _ = fs::remove_file(dir.join(INCOMPLETE_MARKER));
        let path = dir.join("progress.tsv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut progress = BufWriter::new(file);
        writeln!(progress, "{PROGRESS_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(Self { dir: dir.to_path_buf(), progress })
    }

    fn log(&mut self, line: &str) -> Result<()> {
        writeln!(self.progress, "{line}").map_err(|e| Error::io(self.dir.join("progress.tsv"), e))
    }

    fn save(&self, name: &str, ckpt: &Checkpoint) -> Result<()> {
        ckpt.save(self.dir.join(name))
    }

    fn finish(mut self) -> Result<()> {
        self.progress.flush().map_err(|e| Error::io(self.dir.join("progress.tsv"), e))
    }

    fn flag_incomplete(dir: &Path, err: &Error) {
        let _ = fs::write(dir.join(INCOMPLETE_MARKER), format!("{err}\n"));
    }
}

/// Starts from a prior draw and runs `config.sweeps` sweeps, keeping every
/// `thin`-th post-burn-in state. With zero sweeps the prior draw itself is
/// the only sample. When an output directory is set, samples are written as
/// `sample_NNNNNN.ckpt` next to `progress.tsv`; a failure leaves an
/// `INCOMPLETE` marker there.
pub fn train_on<R: Rng + ?Sized>(data: Arc<Dataset>, config: &RunConfig, rng: &mut R) -> Result<TrainOutput> {
    config.validate()?;
    let mut outputs = match &config.output_dir {
        Some(dir) => Some(Outputs::open(dir)?),
        None => None,
    };
    let result = run_chain(data, config, rng, &mut outputs);
    match (result, outputs, &config.output_dir) {
        (Ok(out), Some(o), Some(dir)) => match o.finish() {
            Ok(()) => Ok(out),
            Err(e) => {
                Outputs::flag_incomplete(dir, &e);
                Err(e)
            }
        },
        (Err(e), Some(o), Some(dir)) => {
            let _ = o.finish();
            Outputs::flag_incomplete(dir, &e);
            Err(e)
        }
        (result, _, _) => result,
    }
}

fn run_chain<R: Rng + ?Sized>(
    data: Arc<Dataset>,
    config: &RunConfig,
    rng: &mut R,
    outputs: &mut Option<Outputs>,
) -> Result<TrainOutput> {
    let mut state = ModelState::sample_prior(data, config.hypers.clone(), rng)?;
    let mut samples = Vec::new();
    let mut totals = SweepStats::default();
    let mut width_trace = Vec::with_capacity(config.sweeps);
    if config.sweeps == 0 {
        let ckpt = Checkpoint::from_state(&state, false);
        if let Some(o) = outputs {
            o.save("sample_000000.ckpt", &ckpt)?;
        }
        samples.push(ckpt);
    }
    for s in 1..=config.sweeps {
        let stats = sweep(&mut state, &config.sweep, rng)?;
        totals.accumulate(&stats);
        width_trace.push(state.structure.widths());
        if let Some(o) = outputs.as_mut() {
            o.log(&progress_line(s, &state, &stats))?;
        }
        if s > config.burn_in && (s - config.burn_in) % config.thin == 0 {
            let ckpt = Checkpoint::from_state(&state, false);
            if let Some(o) = outputs.as_ref() {
                o.save(&format!("sample_{s:06}.ckpt"), &ckpt)?;
            }
            samples.push(ckpt);
        }
        if config.checkpoint_every > 0 && s % config.checkpoint_every == 0 {
            if let Some(o) = outputs.as_ref() {
                o.save("state.ckpt", &Checkpoint::from_state(&state, true))?;
            }
        }
    }
    Ok(TrainOutput {
        samples,
        final_state: state,
        totals,
        width_trace,
    })
}

/// Within-checkpoint sampling schedule for reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionConfig {
    /// Hidden-state sweeps per test image and checkpoint.
    pub hidden_sweeps: usize,
    /// Leading sweeps not averaged.
    pub discard: usize,
    pub mtm_candidates: usize,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        Self {
            hidden_sweeps: 20,
            discard: 5,
            mtm_candidates: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    /// Mean squared error over missing pixels, in pixel units, per image.
    pub model_mse: Vec<f64>,
    /// Same, for the per-pixel training-mean predictor.
    pub baseline_mse: Vec<f64>,
    /// Posterior samples averaged per image.
    pub samples_used: usize,
}

impl ReconstructionReport {
    pub fn mean_model_mse(&self) -> f64 {
        mean(&self.model_mse)
    }

    pub fn mean_baseline_mse(&self) -> f64 {
        mean(&self.baseline_mse)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_index,model_mse,baseline_mse\n");
        for (i, (m, b)) in self.model_mse.iter().zip(&self.baseline_mse).enumerate() {
            out.push_str(&format!("{i},{m},{b}\n"));
        }
        out
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub report: ReconstructionReport,
    /// Test images with missing entries replaced by their posterior means.
    pub images: Vec<Vec<f64>>,
}

/// Fills the missing entries of `test` by averaging, over checkpoints and
/// over post-discard hidden-state sweeps, each missing unit's conditional
/// mean given its parents. `train_means` are per-pixel training means in the
/// scaled space and define the baseline.
pub fn reconstruct<R: Rng + ?Sized>(
    samples: &[Checkpoint],
    test: &Dataset,
    train_means: &[f64],
    config: &ReconstructionConfig,
    rng: &mut R,
) -> Result<Reconstruction> {
    let width = test.width();
    if test.masks.is_none() {
        return Err(Error::param("test", "reconstruction needs observation masks"));
    }
    if train_means.len() != width {
        return Err(Error::param("train_means", "length differs from test width"));
    }
    if config.discard >= config.hidden_sweeps {
        return Err(Error::param("discard", "must be smaller than hidden_sweeps"));
    }
    if config.mtm_candidates == 0 {
        return Err(Error::param("mtm_candidates", "must be at least 1"));
    }
    for c in samples {
        if c.structure.visible_width() != width {
            return Err(Error::Inconsistent(format!(
                "checkpoint has {} visible units, test data {width}",
                c.structure.visible_width()
            )));
        }
    }

    let per_ckpt = config.hidden_sweeps - config.discard;
    let mut sums = vec![vec![0.0; width]; test.len()];
    for ckpt in samples {
        let seed = rng.next_u64();
        let topo = Topology::new(&ckpt.structure, &ckpt.layers);
        sums.par_iter_mut().enumerate().for_each(|(n, acc)| {
            let mut r = stream(seed, n as u64);
            let observed = |k: usize| test.is_observed(n, k);
            let mut datum = ancestral_layers(&ckpt.structure, &ckpt.layers, &mut r);
            for k in 0..width {
                if observed(k) {
                    datum[0][k] = clamp_state(test.observations[n][k]);
                }
            }
            for s in 0..config.hidden_sweeps {
                resample_datum(&topo, &ckpt.layers, &mut datum, observed, config.mtm_candidates, &mut r);
                if s >= config.discard {
                    for (k, a) in acc.iter_mut().enumerate() {
                        if !observed(k) {
                            let y = activation_of(&ckpt.structure, &ckpt.layers, &datum, 0, k);
                            *a += unit_mean(y, ckpt.layers[0].precisions[k]);
                        }
                    }
                }
            }
        });
    }

    let total = (samples.len() * per_ckpt) as f64;
    let maxval = test.maxval;
    let mut images = Vec::with_capacity(test.len());
    let mut model_mse = Vec::with_capacity(test.len());
    let mut baseline_mse = Vec::with_capacity(test.len());
    for (n, acc) in sums.iter().enumerate() {
        let truth = &test.observations[n];
        let mut image = truth.clone();
        let (mut se_model, mut se_base, mut missing) = (0.0, 0.0, 0usize);
        for k in 0..width {
            if test.is_observed(n, k) {
                continue;
            }
            let guess = if total > 0.0 { acc[k] / total } else { train_means[k] };
            image[k] = guess;
            let t = unscale(truth[k], maxval);
            se_model += (unscale(guess, maxval) - t).powi(2);
            se_base += (unscale(train_means[k], maxval) - t).powi(2);
            missing += 1;
        }
        let denom = missing.max(1) as f64;
        model_mse.push(se_model / denom);
        baseline_mse.push(se_base / denom);
        images.push(image);
    }
    Ok(Reconstruction {
        report: ReconstructionReport {
            model_mse,
            baseline_mse,
            samples_used: samples.len() * per_ckpt,
        },
        images,
    })
}

/// `count` ancestral draws of the visible layer, cycling through the
/// checkpoints.
pub fn fantasize<R: Rng + ?Sized>(samples: &[Checkpoint], count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    if samples.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|i| {
            let c = &samples[i % samples.len()];
            ancestral_sample(&c.structure, &c.layers, rng)
        })
        .collect()
}

/// Weight images of layer-1 units and visible activations of deeper units.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    /// Per layer-1 unit, the weight into each visible unit (`None` where
    /// there is no edge).
    pub bottom: Vec<Vec<Option<f64>>>,
    /// `(layer, unit, visible means)` for every unit in layers `2..`.
    pub deep: Vec<(usize, usize, Vec<f64>)>,
}

/// Pixel value marking an absent edge in rendered weight images.
pub const EDGE_SENTINEL: u8 = 0;

impl FeatureMaps {
    /// Renders a weight map: sentinel where there is no edge, otherwise the
    /// weight scaled into `1..=255` symmetrically about the midpoint.
    pub fn render_weights(map: &[Option<f64>]) -> Vec<u8> {
        let top = map.iter().flatten().fold(0.0f64, |a, w| a.max(w.abs()));
        map.iter()
            .map(|w| match w {
                None => EDGE_SENTINEL,
                Some(w) => {
                    let t = if top > 0.0 { w / top } else { 0.0 };
                    (128.0 + 127.0 * t).round().clamp(1.0, 255.0) as u8
                }
            })
            .collect()
    }
}

/// Collects feature maps from one checkpoint. Deep units are set to the
/// active extreme with every other unit in their layer at 0, and means are
/// pushed down through the sigmoid layer by layer.
pub fn export_feature_maps(ckpt: &Checkpoint) -> FeatureMaps {
    let s = &ckpt.structure;
    let visible = s.visible_width();
    let mut bottom = Vec::new();
    if s.depth() >= 1 {
        let z = s.edges(1);
        for p in 0..s.width(1) {
            bottom.push(
                (0..visible)
                    .map(|c| z.get(c, p).then(|| ckpt.layers[1].weights.get(c, p)))
                    .collect(),
            );
        }
    }
    let mut deep = Vec::new();
    for m in 2..=s.depth() {
        for j in 0..s.width(m) {
            deep.push((m, j, propagate_unit(s, &ckpt.layers, m, j)));
        }
    }
    FeatureMaps { bottom, deep }
}

/// Visible means when unit `j` of layer `m` alone is active.
pub fn propagate_unit(structure: &NetworkStructure, layers: &[LayerParameters], m: usize, j: usize) -> Vec<f64> {
    let mut datum: Vec<Vec<f64>> = (0..=structure.depth()).map(|l| vec![0.0; structure.width(l)]).collect();
    datum[m][j] = STATE_LIMIT;
    for l in (0..m).rev() {
        for k in 0..structure.width(l) {
            datum[l][k] = sigmoid(activation_of(structure, layers, &datum, l, k));
        }
    }
    datum.swap_remove(0)
}

/// Writes feature maps as PGM files into `dir`: `w1_unit_K.pgm` and
/// `deep_M_unit_K.pgm`.
pub fn write_feature_maps(maps: &FeatureMaps, shape: (usize, usize), maxval: u32, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = shape;
    let mut written = Vec::new();
    for (k, map) in maps.bottom.iter().enumerate() {
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend(FeatureMaps::render_weights(map));
        let path = dir.join(format!("w1_unit_{k}.pgm"));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    for (m, k, values) in &maps.deep {
        let path = dir.join(format!("deep_{m}_unit_{k}.pgm"));
        fs::write(&path, encode_pgm(values, h, w, maxval)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Writes images in the scaled space as numbered PGM files.
pub fn write_images(images: &[Vec<f64>], shape: (usize, usize), maxval: u32, dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let path = dir.join(format!("{prefix}_{i:05}.pgm"));
            fs::write(&path, encode_pgm(img, shape.0, shape.1, maxval)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Loads every `sample_*.ckpt` in `dir`, sorted by name.
pub fn load_samples(dir: &Path) -> Result<Vec<Checkpoint>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("sample_") && n.ends_with(".ckpt"))
        })
        .collect();
    paths.sort();
    paths.iter().map(Checkpoint::load).collect()
}
