//! Versioned plain-text checkpoints.
//!
//! ```text
//! cibp-checkpoint 1
//! widths K0 K1 ... KM
//! layer m                      (one block per layer, m = 0..=M)
//! prior mu_w rho_w mu_gamma rho_gamma a b
//! edges E                      (layers m >= 1; E lines `child parent weight`)
//! bias ...
//! precision ...
//! hypers D                     (D lines `ibp alpha beta`)
//! bounds alpha_bound beta_bound
//! rates alpha_rate beta_rate
//! weight-hyper mean kappa shape rate
//! bias-hyper mean kappa shape rate
//! precision-hyper shape_a rate_a shape_b rate_b
//! states N                     (optional; N * (M + 1) lines `n m values...`)
//! end
//! ```
//!
//! Reals are written with 17 significant digits, so parsing reproduces every
//! value bit for bit.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hypers::{HyperParameters, LayerHyperprior, NormalGamma};
use crate::ibp::{EdgeMatrix, IbpParams};
use crate::network::{LayerParameters, ModelState, NetworkStructure, PriorParams, UnitStates};

pub const VERSION: u32 = 1;
const MAGIC: &str = "cibp-checkpoint";

/// Structure, parameters, hyperparameters and (optionally) unit states.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub structure: NetworkStructure,
    pub layers: Vec<LayerParameters>,
    pub hypers: HyperParameters,
    pub states: Option<UnitStates>,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn reals(out: &mut String, tag: &str, xs: &[f64]) {
    out.push_str(tag);
    for &x in xs {
        out.push(' ');
        out.push_str(&real(x));
    }
    out.push('\n');
}

impl Checkpoint {
    pub fn from_state(state: &ModelState, with_states: bool) -> Self {
        Self {
            structure: state.structure.clone(),
            layers: state.layers.clone(),
            hypers: state.hypers.clone(),
            states: with_states.then(|| state.states.clone()),
        }
    }

    /// Rebuilds a sampler state; fails when no unit states were stored.
    pub fn into_state(self, data: Arc<Dataset>) -> Result<ModelState> {
        let states = match self.states {
            Some(s) => s,
            None => {
                return Err(Error::Inconsistent("checkpoint carries no unit states".into()));
            }
        };
        ModelState::new(self.structure, self.layers, states, data, self.hypers)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        reals_usize(&mut out, "widths", &self.structure.widths());
        for (m, lp) in self.layers.iter().enumerate() {
            let _ = writeln!(out, "layer {m}");
            let p = &lp.prior;
            reals(&mut out, "prior", &[p.mu_w, p.rho_w, p.mu_gamma, p.rho_gamma, p.a, p.b]);
            if m >= 1 {
                let z = self.structure.edges(m);
                let _ = writeln!(out, "edges {}", z.edge_count());
                for (c, p) in z.entries() {
                    let _ = writeln!(out, "{c} {p} {}", real(lp.weights.get(c, p)));
                }
            }
            reals(&mut out, "bias", &lp.biases);
            reals(&mut out, "precision", &lp.precisions);
        }
        let h = &self.hypers;
        let _ = writeln!(out, "hypers {}", h.ibp.len());
        for p in &h.ibp {
            reals(&mut out, "ibp", &[p.alpha, p.beta]);
        }
        reals(&mut out, "bounds", &[h.alpha_bound, h.beta_bound]);
        reals(&mut out, "rates", &[h.alpha_rate, h.beta_rate]);
        for (tag, ng) in [("weight-hyper", &h.layer.weight), ("bias-hyper", &h.layer.bias)] {
            reals(&mut out, tag, &[ng.mean, ng.kappa, ng.shape, ng.rate]);
        }
        let (sa, ra) = h.layer.precision_shape;
        let (sb, rb) = h.layer.precision_rate;
        reals(&mut out, "precision-hyper", &[sa, ra, sb, rb]);
        if let Some(states) = &self.states {
            let _ = writeln!(out, "states {}", states.len());
            for (n, datum) in states.iter().enumerate() {
                for (m, layer) in datum.iter().enumerate() {
                    reals(&mut out, &format!("{n} {m}"), layer);
                }
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Reader::new(text);
        let head = r.line()?;
        if head.first() != Some(&MAGIC) {
            return Err(r.err("not a checkpoint"));
        }
        let version: u32 = r.num(head.get(1))?;
        if version != VERSION {
            return Err(r.err(&format!("unsupported version {version}")));
        }
        let widths: Vec<usize> = r.tagged("widths")?.iter().map(|t| r.num(Some(t))).collect::<Result<_>>()?;
        if widths.is_empty() {
            return Err(r.err("no widths"));
        }
        let depth = widths.len() - 1;
        let mut matrices = Vec::with_capacity(depth);
        let mut layers = Vec::with_capacity(depth + 1);
        for m in 0..=depth {
            let tag = r.tagged("layer")?;
            if r.num::<usize>(tag.first())? != m {
                return Err(r.err("layer blocks out of order"));
            }
            let pr = r.reals("prior", 6)?;
            let prior = PriorParams {
                mu_w: pr[0],
                rho_w: pr[1],
                mu_gamma: pr[2],
                rho_gamma: pr[3],
                a: pr[4],
                b: pr[5],
            };
            let below = if m == 0 { 0 } else { widths[m - 1] };
            let mut lp = LayerParameters::new(below, widths[m], prior);
            if m >= 1 {
                let tag = r.tagged("edges")?;
                let count: usize = r.num(tag.first())?;
                let mut z = EdgeMatrix::new(below, widths[m]);
                for _ in 0..count {
                    let t = r.line()?;
                    let [c, p, w] = t[..] else {
                        return Err(r.err("expected `child parent weight`"));
                    };
                    let (c, p): (usize, usize) = (r.num(Some(&c))?, r.num(Some(&p))?);
                    if c >= below || p >= widths[m] {
                        return Err(r.err("edge out of range"));
                    }
                    z.set(c, p, true);
                    lp.weights.set(c, p, r.num(Some(&w))?);
                }
                matrices.push(z);
            }
            lp.biases = r.reals("bias", widths[m])?;
            lp.precisions = r.reals("precision", widths[m])?;
            layers.push(lp);
        }
        let structure = NetworkStructure::from_matrices(widths[0], matrices)?;
        let tag = r.tagged("hypers")?;
        let depths: usize = r.num(tag.first())?;
        let ibp = (0..depths)
            .map(|_| r.reals("ibp", 2).map(|v| IbpParams { alpha: v[0], beta: v[1] }))
            .collect::<Result<Vec<_>>>()?;
        let bounds = r.reals("bounds", 2)?;
        let rates = r.reals("rates", 2)?;
        let ng = |v: Vec<f64>| NormalGamma {
            mean: v[0],
            kappa: v[1],
            shape: v[2],
            rate: v[3],
        };
        let weight = ng(r.reals("weight-hyper", 4)?);
        let bias = ng(r.reals("bias-hyper", 4)?);
        let ph = r.reals("precision-hyper", 4)?;
        let hypers = HyperParameters {
            ibp,
            alpha_bound: bounds[0],
            beta_bound: bounds[1],
            alpha_rate: rates[0],
            beta_rate: rates[1],
            layer: LayerHyperprior {
                weight,
                bias,
                precision_shape: (ph[0], ph[1]),
                precision_rate: (ph[2], ph[3]),
            },
        };
        let next = r.line()?;
        let states = match next.first() {
            Some(&"states") => {
                let n: usize = r.num(next.get(1))?;
                let mut per_datum = Vec::with_capacity(n);
                for i in 0..n {
                    let mut datum = Vec::with_capacity(depth + 1);
                    for (m, &w) in widths.iter().enumerate() {
                        let t = r.line()?;
                        if t.len() != w + 2 || r.num::<usize>(t.first())? != i || r.num::<usize>(t.get(1))? != m {
                            return Err(r.err("malformed state line"));
                        }
                        datum.push(t[2..].iter().map(|x| r.num(Some(x))).collect::<Result<Vec<f64>>>()?);
                    }
                    per_datum.push(datum);
                }
                if r.line()?.first() != Some(&"end") {
                    return Err(r.err("expected `end`"));
                }
                Some(UnitStates::from_nested(per_datum))
            }
            Some(&"end") => None,
            _ => return Err(r.err("expected `states` or `end`")),
        };
        Ok(Self {
            structure,
            layers,
            hypers,
            states,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

fn reals_usize(out: &mut String, tag: &str, xs: &[usize]) {
    out.push_str(tag);
    for x in xs {
        let _ = write!(out, " {x}");
    }
    out.push('\n');
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            at: 0,
        }
    }

    fn err(&self, reason: &str) -> Error {
        Error::Checkpoint {
            line: self.at,
            reason: reason.to_string(),
        }
    }

    fn line(&mut self) -> Result<Vec<&'a str>> {
        loop {
            let Some((i, l)) = self.lines.next() else {
                return Err(self.err("unexpected end of input"));
            };
            self.at = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace().collect());
            }
        }
    }

    fn tagged(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let t = self.line()?;
        if t.first() != Some(&tag) {
            return Err(self.err(&format!("expected `{tag}`")));
        }
        Ok(t[1..].to_vec())
    }

    fn reals(&mut self, tag: &str, count: usize) -> Result<Vec<f64>> {
        let t = self.tagged(tag)?;
        if t.len() != count {
            return Err(self.err(&format!("`{tag}` needs {count} values, found {}", t.len())));
        }
        t.iter().map(|x| self.num(Some(x))).collect()
    }

    fn num<T: std::str::FromStr>(&self, tok: Option<&&str>) -> Result<T> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(&format!("bad number `{}`", tok.copied().unwrap_or(""))))
    }
}
