//! Hidden-state updates: an independence multiple-try Metropolis kernel that
//! proposes from the unit's activation distribution and weighs candidates by
//! the likelihood its children assign them.

use rand::Rng;

use crate::network::{logit, sample_unit, LayerParameters, ModelState, NetworkStructure};
use crate::random::open01;

/// Parent and child adjacency with weights, flattened for the hot loop.
/// `parents[m][k]` lists `(parent, weight)` in layer `m + 1`;
/// `children[m][k]` lists `(child, weight)` in layer `m - 1`.
pub(crate) struct Topology {
    pub parents: Vec<Vec<Vec<(usize, f64)>>>,
    pub children: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Topology {
    pub fn new(structure: &NetworkStructure, layers: &[LayerParameters]) -> Self {
        let depth = structure.depth();
        let mut parents: Vec<Vec<Vec<(usize, f64)>>> =
            (0..=depth).map(|m| vec![Vec::new(); structure.width(m)]).collect();
        let mut children = parents.clone();
        for m in 1..=depth {
            let w = &layers[m].weights;
            for (c, p) in structure.edges(m).entries() {
                let wt = w.get(c, p);
                parents[m - 1][c].push((p, wt));
                children[m][p].push((c, wt));
            }
        }
        Self { parents, children }
    }

    #[inline]
    pub fn activation(&self, layers: &[LayerParameters], datum: &[Vec<f64>], m: usize, k: usize) -> f64 {
        let mut y = layers[m].biases[k];
        for &(p, w) in &self.parents[m][k] {
            y += w * datum[m + 1][p];
        }
        y
    }
}

/// Move counters for the kernel.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct MtmCounts {
    pub attempts: u64,
    pub accepts: u64,
}

impl std::ops::AddAssign for MtmCounts {
    fn add_assign(&mut self, o: Self) {
        self.attempts += o.attempts;
        self.accepts += o.accepts;
    }
}

/// Scratch space reused across units of one datum.
#[derive(Default)]
pub(crate) struct MtmScratch {
    cavity: Vec<f64>,
    child_x: Vec<f64>,
    child_nu: Vec<f64>,
    child_w: Vec<f64>,
    cand: Vec<f64>,
    logw: Vec<f64>,
}

/// One multiple-try update of unit `k` in hidden layer `m` for one datum.
/// Returns whether the state moved to a candidate.
pub(crate) fn mtm_update<R: Rng + ?Sized>(
    topo: &Topology,
    layers: &[LayerParameters],
    datum: &mut [Vec<f64>],
    m: usize,
    k: usize,
    candidates: usize,
    scratch: &mut MtmScratch,
    rng: &mut R,
) -> bool {
    let y = topo.activation(layers, datum, m, k);
    let nu = layers[m].precisions[k];
    let current = datum[m][k];

    let s = scratch;
    s.cavity.clear();
    s.child_x.clear();
    s.child_nu.clear();
    s.child_w.clear();
    for &(c, w) in &topo.children[m][k] {
        let yc = topo.activation(layers, datum, m - 1, c) - w * current;
        s.cavity.push(yc);
        s.child_x.push(logit(datum[m - 1][c]));
        s.child_nu.push(layers[m - 1].precisions[c]);
        s.child_w.push(w);
    }
    let log_weight = |u: f64, s: &MtmScratch| -> f64 {
        let mut lw = 0.0;
        for i in 0..s.cavity.len() {
            let r = s.child_x[i] - s.cavity[i] - s.child_w[i] * u;
            lw -= 0.5 * s.child_nu[i] * r * r;
        }
        lw
    };

    s.cand.clear();
    s.logw.clear();
    for _ in 0..candidates {
        let u = sample_unit(rng, y, nu);
        s.cand.push(u);
        let lw = log_weight(u, s);
        s.logw.push(lw);
    }
    let lw_current = log_weight(current, s);
    let top = s.logw.iter().copied().fold(lw_current, f64::max);
    let total: f64 = s.logw.iter().map(|lw| (lw - top).exp()).sum();

    // Select a candidate proportionally to its weight.
    let mut target = open01(rng) * total;
    let mut pick = candidates - 1;
    for (i, lw) in s.logw.iter().enumerate() {
        let w = (lw - top).exp();
        if target < w {
            pick = i;
            break;
        }
        target -= w;
    }
    // Reference set: the other candidates plus the current value.
    let reference: f64 = s
        .logw
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pick)
        .map(|(_, lw)| (lw - top).exp())
        .sum::<f64>()
        + (lw_current - top).exp();
    if open01(rng) * reference < total {
        datum[m][k] = s.cand[pick];
        true
    } else {
        false
    }
}

/// Sweeps one datum: every hidden unit shallow to deep, then every missing
/// visible entry (drawn exactly from its conditional, having no children).
pub(crate) fn resample_datum<R: Rng + ?Sized>(
    topo: &Topology,
    layers: &[LayerParameters],
    datum: &mut [Vec<f64>],
    observed: impl Fn(usize) -> bool,
    candidates: usize,
    rng: &mut R,
) -> MtmCounts {
    let mut counts = MtmCounts::default();
    let mut scratch = MtmScratch::default();
    for m in 1..datum.len() {
        for k in 0..datum[m].len() {
            counts.attempts += 1;
            if mtm_update(topo, layers, datum, m, k, candidates, &mut scratch, rng) {
                counts.accepts += 1;
            }
        }
    }
    for k in 0..datum[0].len() {
        if !observed(k) {
            let y = topo.activation(layers, datum, 0, k);
            datum[0][k] = sample_unit(rng, y, layers[0].precisions[k]);
        }
    }
    counts
}

/// Updates the value of unit `k` in layer `m` for datum `n`. Hidden units use
/// the multiple-try kernel; a missing visible entry is redrawn from its
/// conditional. Observed visible entries are left alone. Returns the new
/// value.
pub fn sample_hidden_states<R: Rng + ?Sized>(
    state: &mut ModelState,
    n: usize,
    m: usize,
    k: usize,
    candidates: usize,
    rng: &mut R,
) -> f64 {
    let topo = Topology::new(&state.structure, &state.layers);
    let observed = state.data.is_observed(n, k);
    let datum = &mut state.states.per_datum[n];
    if m == 0 {
        if !observed {
            let y = topo.activation(&state.layers, datum, 0, k);
            datum[0][k] = sample_unit(rng, y, state.layers[0].precisions[k]);
        }
    } else {
        let mut scratch = MtmScratch::default();
        mtm_update(&topo, &state.layers, datum, m, k, candidates.max(1), &mut scratch, rng);
    }
    datum[m][k]
}
