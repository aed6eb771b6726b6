//! The Markov chain over structure, parameters and hidden states.
//!
//! One [`sweep`] visits, in order: hidden states (data in parallel), edges
//! and singleton parents layer by layer, weights, biases, precisions, layer
//! prior parameters and the per-depth IBP parameters, then prunes units that
//! no longer reach the visible layer. A failed sweep leaves the state as it
//! was.

mod gibbs;
mod hidden;
mod priors;
mod structure;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::ModelState;
use crate::random::stream;

pub use gibbs::{
    bias_conditional, gibbs_bias, gibbs_precision, gibbs_weight, precision_conditional, weight_conditional,
};
pub use hidden::{sample_hidden_states, MtmCounts};
pub(crate) use hidden::{resample_datum, Topology};
pub use priors::{sample_cibp_hypers, sample_layer_prior_params, IbpSuffStats, WalkCounts};
pub use structure::{
    birth_log_ratio, death_log_ratio, edge_prior_probability, sample_shared_parents, sample_singleton_parents,
    singleton_parents, singleton_rate, SingletonMove,
};

/// Which move families a sweep runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoveFlags {
    pub hidden: bool,
    pub structure: bool,
    pub weights: bool,
    pub biases: bool,
    pub precisions: bool,
    pub layer_priors: bool,
    pub cibp_hypers: bool,
}

impl Default for MoveFlags {
    fn default() -> Self {
        Self::all()
    }
}

impl MoveFlags {
    pub fn all() -> Self {
        Self {
            hidden: true,
            structure: true,
            weights: true,
            biases: true,
            precisions: true,
            layer_priors: true,
            cibp_hypers: true,
        }
    }

    pub fn none() -> Self {
        Self {
            hidden: false,
            structure: false,
            weights: false,
            biases: false,
            precisions: false,
            layer_priors: false,
            cibp_hypers: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Candidates per multiple-try hidden-state update.
    pub mtm_candidates: usize,
    pub moves: MoveFlags,
    /// Probability that a singleton move proposes a birth.
    pub singleton_proposal_prob: f64,
    /// Standard deviation of the log-scale walks on alpha and beta.
    pub hyper_step_size: f64,
    /// Standard deviation of the log-scale walk on each layer's precision
    /// shape, whose posterior tightens with layer width.
    pub shape_step_size: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mtm_candidates: 5,
            moves: MoveFlags::all(),
            singleton_proposal_prob: 0.5,
            hyper_step_size: 1.0,
            shape_step_size: 0.2,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mtm_candidates == 0 {
            return Err(Error::param("mtm_candidates", "must be at least 1"));
        }
        if !(self.singleton_proposal_prob > 0.0 && self.singleton_proposal_prob < 1.0) {
            return Err(Error::param("singleton_proposal_prob", "must lie in (0, 1)"));
        }
        if !(self.hyper_step_size > 0.0 && self.hyper_step_size.is_finite()) {
            return Err(Error::param("hyper_step_size", "must be positive"));
        }
        if !(self.shape_step_size > 0.0 && self.shape_step_size.is_finite()) {
            return Err(Error::param("shape_step_size", "must be positive"));
        }
        Ok(())
    }
}

/// Counters gathered over one or more sweeps.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub mtm: MtmCounts,
    pub births: (u64, u64),
    pub deaths: (u64, u64),
    pub edge_flips: u64,
    pub prior_shape: WalkCounts,
    pub hypers: WalkCounts,
    pub pruned: u64,
    /// Joint log density after the sweep.
    pub joint_log_density: f64,
}

fn rate(accepts: u64, attempts: u64) -> f64 {
    if attempts == 0 {
        f64::NAN
    } else {
        accepts as f64 / attempts as f64
    }
}

impl SweepStats {
    pub fn mtm_rate(&self) -> f64 {
        rate(self.mtm.accepts, self.mtm.attempts)
    }

    pub fn birth_rate(&self) -> f64 {
        rate(self.births.1, self.births.0)
    }

    pub fn death_rate(&self) -> f64 {
        rate(self.deaths.1, self.deaths.0)
    }

    pub fn hyper_rate(&self) -> f64 {
        rate(self.hypers.accepts, self.hypers.attempts)
    }

    /// Adds counters from `other`; the joint density is taken from `other`.
    pub fn accumulate(&mut self, other: &SweepStats) {
        self.mtm += other.mtm;
        self.births.0 += other.births.0;
        self.births.1 += other.births.1;
        self.deaths.0 += other.deaths.0;
        self.deaths.1 += other.deaths.1;
        self.edge_flips += other.edge_flips;
        self.prior_shape += other.prior_shape;
        self.hypers += other.hypers;
        self.pruned += other.pruned;
        self.joint_log_density = other.joint_log_density;
    }
}

/// Column names of [`progress_line`], tab separated. The widths occupy
/// `M_active + 1` fields.
pub const PROGRESS_HEADER: &str =
    "sweep\tjoint_log_density\tM_active\twidths...\talpha0\tbeta0\tmtm_accept\tbirth_accept\tdeath_accept\thyper_accept";

/// One tab-separated progress record.
pub fn progress_line(sweep_index: usize, state: &ModelState, stats: &SweepStats) -> String {
    let mut fields = vec![
        sweep_index.to_string(),
        format!("{:.6}", stats.joint_log_density),
        state.depth().to_string(),
    ];
    fields.extend(state.structure.widths().iter().map(|w| w.to_string()));
    let h = state.hypers.at(0);
    fields.push(format!("{:.6}", h.alpha));
    fields.push(format!("{:.6}", h.beta));
    for r in [stats.mtm_rate(), stats.birth_rate(), stats.death_rate(), stats.hyper_rate()] {
        fields.push(format!("{r:.4}"));
    }
    fields.join("\t")
}

/// Runs one full sweep. On error the state is restored to its value at
/// entry.
pub fn sweep<R: Rng + ?Sized>(state: &mut ModelState, config: &SweepConfig, rng: &mut R) -> Result<SweepStats> {
    config.validate()?;
    let snapshot = state.clone();
    match sweep_inner(state, config, rng) {
        Ok(stats) => Ok(stats),
        Err(e) => {
            *state = snapshot;
            Err(e)
        }
    }
}

/// Hidden-state pass over every datum in parallel, each with its own
/// stream derived from one draw of `rng`.
pub fn sample_all_hidden<R: Rng + ?Sized>(state: &mut ModelState, candidates: usize, rng: &mut R) -> MtmCounts {
    let pass_seed = rng.next_u64();
    let topo = Topology::new(&state.structure, &state.layers);
    let layers = &state.layers;
    let data = &state.data;
    state
        .states
        .per_datum
        .par_iter_mut()
        .enumerate()
        .map(|(n, datum)| {
            let mut r = stream(pass_seed, n as u64);
            resample_datum(&topo, layers, datum, |k| data.is_observed(n, k), candidates, &mut r)
        })
        .reduce(MtmCounts::default, |mut a, b| {
            a += b;
            a
        })
}

fn sweep_inner<R: Rng + ?Sized>(state: &mut ModelState, config: &SweepConfig, rng: &mut R) -> Result<SweepStats> {
    let mut stats = SweepStats::default();
    let moves = config.moves;

    if moves.hidden {
        stats.mtm = sample_all_hidden(state, config.mtm_candidates, rng);
    }

    if moves.structure {
        let mut m = 0;
        while m <= state.depth() {
            for k in 0..state.width(m) {
                stats.edge_flips += sample_shared_parents(state, m, k, config, rng)? as u64;
                match sample_singleton_parents(state, m, k, config, rng)? {
                    SingletonMove::BirthAccepted => {
                        stats.births.0 += 1;
                        stats.births.1 += 1;
                    }
                    SingletonMove::BirthRejected => stats.births.0 += 1,
                    SingletonMove::DeathAccepted => {
                        stats.deaths.0 += 1;
                        stats.deaths.1 += 1;
                    }
                    SingletonMove::DeathRejected => stats.deaths.0 += 1,
                    SingletonMove::Skipped => {}
                }
            }
            m += 1;
        }
        // Edge flips can orphan units too.
        stats.pruned += state.prune_non_ancestors() as u64;
    }

    if moves.weights {
        for m in 1..=state.depth() {
            let edges: Vec<_> = state.structure.edges(m).entries().collect();
            for (c, p) in edges {
                gibbs_weight(state, m, c, p, rng)?;
            }
        }
    }
    if moves.biases {
        for m in 0..=state.depth() {
            for k in 0..state.width(m) {
                gibbs_bias(state, m, k, rng)?;
            }
        }
    }
    if moves.precisions {
        for m in 0..=state.depth() {
            for k in 0..state.width(m) {
                gibbs_precision(state, m, k, rng)?;
            }
        }
    }
    if moves.layer_priors {
        for m in 0..=state.depth() {
            stats.prior_shape += sample_layer_prior_params(state, m, config, rng)?;
        }
    }
    if moves.cibp_hypers {
        stats.hypers = sample_cibp_hypers(state, config, rng);
    }

    stats.pruned += state.prune_non_ancestors() as u64;
    state.structure.validate()?;
    let joint = state.joint_log_density()?;
    if !joint.is_finite() {
        return Err(Error::NonFinite("joint log density"));
    }
    stats.joint_log_density = joint;
    Ok(stats)
}
