//! Edge updates: exact Gibbs on edges into parents that have other children,
//! and birth/death of parents that have no other child.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ibp::{IbpParams, DEFAULT_DEPTH_CAP};
use crate::network::{activation_of, logit, sample_unit, ModelState};
use crate::random::{normal, open01, poisson};

use super::SweepConfig;

/// Outcome of one birth/death attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingletonMove {
    BirthAccepted,
    BirthRejected,
    DeathAccepted,
    DeathRejected,
    /// A death was chosen but no singleton parent existed.
    Skipped,
}

/// Sufficient inputs for the likelihood of one unit across the data.
struct UnitView {
    x: Vec<f64>,
    y: Vec<f64>,
    nu: f64,
}

impl UnitView {
    fn new(state: &ModelState, m: usize, k: usize) -> Self {
        let mut x = Vec::with_capacity(state.n_data());
        let mut y = Vec::with_capacity(state.n_data());
        for datum in state.states.iter() {
            x.push(logit(datum[m][k]));
            y.push(activation_of(&state.structure, &state.layers, datum, m, k));
        }
        Self { x, y, nu: state.layers[m].precisions[k] }
    }

    /// Log likelihood change when `delta[n]` is added to every activation.
    fn shift_log_ratio(&self, delta: impl Fn(usize) -> f64) -> f64 {
        let mut total = 0.0;
        for n in 0..self.x.len() {
            let r0 = self.x[n] - self.y[n];
            let r1 = r0 - delta(n);
            total += 0.5 * self.nu * (r0 * r0 - r1 * r1);
        }
        total
    }
}

/// Prior probability that customer `k` tastes a dish that `eta` other
/// customers among `customers` have tasted.
pub fn edge_prior_probability(eta: usize, customers: usize, beta: f64) -> f64 {
    eta as f64 / (customers as f64 + beta - 1.0)
}

/// Expected number of dishes only customer `k` tastes, among `customers`.
pub fn singleton_rate(params: &IbpParams, customers: usize) -> f64 {
    params.alpha * params.beta / (customers as f64 + params.beta - 1.0)
}

/// Log acceptance ratio for adding a singleton parent when `singletons`
/// exist, given the child's log likelihood ratio.
pub fn birth_log_ratio(rate: f64, singletons: usize, log_lr: f64, p_birth: f64) -> f64 {
    rate.ln() - (singletons as f64 + 1.0).ln() + log_lr + (1.0 - p_birth).ln() - p_birth.ln()
}

/// Log acceptance ratio for removing one of `singletons` singleton parents.
pub fn death_log_ratio(rate: f64, singletons: usize, log_lr: f64, p_birth: f64) -> f64 {
    (singletons as f64).ln() - rate.ln() + log_lr + p_birth.ln() - (1.0 - p_birth).ln()
}

/// Current IBP parameters for the restaurant whose customers are layer `m`,
/// extending the per-depth vector with prior draws when hypers are sampled.
pub(crate) fn ibp_params_at<R: Rng + ?Sized>(
    state: &mut ModelState,
    m: usize,
    config: &SweepConfig,
    rng: &mut R,
) -> IbpParams {
    if config.moves.cibp_hypers {
        while state.hypers.ibp.len() <= m {
            let p = state.hypers.sample_ibp_prior(rng);
            state.hypers.ibp.push(p);
        }
    }
    state.hypers.at(m)
}

/// Gibbs update of every edge from unit `k` of layer `m` into parents in
/// layer `m + 1` that have at least one other child. Returns the number of
/// edges whose state flipped.
pub fn sample_shared_parents<R: Rng + ?Sized>(
    state: &mut ModelState,
    m: usize,
    k: usize,
    config: &SweepConfig,
    rng: &mut R,
) -> Result<usize> {
    if m >= state.depth() {
        return Ok(0);
    }
    if k >= state.width(m) {
        return Err(Error::param("unit", format!("no unit ({m}, {k})")));
    }
    let params = ibp_params_at(state, m, config, rng);
    let mut view = UnitView::new(state, m, k);
    let customers = state.width(m);
    let prior = state.layers[m + 1].prior;
    let mut flips = 0;
    for p in 0..state.width(m + 1) {
        let eta = state.structure.edges(m + 1).column_sum_excluding(p, k);
        if eta == 0 {
            continue;
        }
        let p_on = edge_prior_probability(eta, customers, params.beta);
        let on = state.structure.edges(m + 1).get(k, p);
        let w = if on {
            state.layers[m + 1].weights.get(k, p)
        } else {
            normal(rng, prior.mu_w, prior.rho_w)
        };
        let parent: Vec<f64> = state.states.iter().map(|d| d[m + 1][p]).collect();
        // Put the edge's contribution to the "off" baseline.
        if on {
            for n in 0..view.y.len() {
                view.y[n] -= w * parent[n];
            }
        }
        let log_lr = view.shift_log_ratio(|n| w * parent[n]);
        let log_odds = p_on.ln() - (1.0 - p_on).ln() + log_lr;
        let take = open01(rng) < 1.0 / (1.0 + (-log_odds).exp());
        if take {
            for n in 0..view.y.len() {
                view.y[n] += w * parent[n];
            }
            state.set_edge(m + 1, k, p, w);
        } else {
            state.clear_edge(m + 1, k, p);
        }
        if take != on {
            flips += 1;
        }
    }
    Ok(flips)
}

/// Parents of unit `k` in layer `m + 1` whose only child is `k`.
pub fn singleton_parents(state: &ModelState, m: usize, k: usize) -> Vec<usize> {
    if m >= state.depth() {
        return Vec::new();
    }
    let z = state.structure.edges(m + 1);
    z.parents_of(k).filter(|&p| z.column_sum(p) == 1).collect()
}

/// One birth/death proposal on the singleton parents of unit `k` in layer
/// `m`. A birth adds a new parent together with a prior draw of its own
/// ancestry; an accepted death removes the edge and prunes immediately.
pub fn sample_singleton_parents<R: Rng + ?Sized>(
    state: &mut ModelState,
    m: usize,
    k: usize,
    config: &SweepConfig,
    rng: &mut R,
) -> Result<SingletonMove> {
    if m > state.depth() || k >= state.width(m) {
        return Err(Error::param("unit", format!("no unit ({m}, {k})")));
    }
    let p_birth = config.singleton_proposal_prob;
    let params = ibp_params_at(state, m, config, rng);
    let lambda = singleton_rate(&params, state.width(m));
    let singles = singleton_parents(state, m, k);

    if open01(rng) < p_birth {
        let birth = propose_birth(state, m, config, rng)?;
        let view = UnitView::new(state, m, k);
        let log_lr = view.shift_log_ratio(|n| birth.weight * birth.values[n]);
        let log_ratio = birth_log_ratio(lambda, singles.len(), log_lr, p_birth);
        if open01(rng).ln() < log_ratio {
            state.set_edge(m + 1, k, birth.unit, birth.weight);
            Ok(SingletonMove::BirthAccepted)
        } else {
            birth.undo(state);
            Ok(SingletonMove::BirthRejected)
        }
    } else {
        if singles.is_empty() {
            return Ok(SingletonMove::Skipped);
        }
        let j = singles[rng.random_range(0..singles.len())];
        let w = state.layers[m + 1].weights.get(k, j);
        let parent: Vec<f64> = state.states.iter().map(|d| d[m + 1][j]).collect();
        let view = UnitView::new(state, m, k);
        let log_lr = view.shift_log_ratio(|n| -w * parent[n]);
        let log_ratio = death_log_ratio(lambda, singles.len(), log_lr, p_birth);
        if open01(rng).ln() < log_ratio {
            state.clear_edge(m + 1, k, j);
            state.prune_non_ancestors();
            Ok(SingletonMove::DeathAccepted)
        } else {
            Ok(SingletonMove::DeathRejected)
        }
    }
}

/// Units added by a birth proposal, not yet connected to their child.
struct Birth {
    /// Index of the proposed parent in layer `m + 1`.
    unit: usize,
    weight: f64,
    /// Values of the new parent per datum.
    values: Vec<f64>,
    /// Pre-proposal widths of layers `m + 1 ..`, `None` for created layers.
    original: Vec<(usize, Option<usize>)>,
}

impl Birth {
    fn undo(self, state: &mut ModelState) {
        for &(l, width) in self.original.iter().rev() {
            let keep = width.unwrap_or(0);
            while state.width(l) > keep {
                let last = state.width(l) - 1;
                state.remove_unit(l, last);
            }
            if width.is_none() {
                state.pop_empty_layer();
            }
        }
    }
}

/// Adds a new unit to layer `m + 1` and seats it, and every unit it spawns,
/// as the next customer of the deeper restaurants. Parameters come from the
/// layer priors and values from top-down prior draws.
fn propose_birth<R: Rng + ?Sized>(state: &mut ModelState, m: usize, config: &SweepConfig, rng: &mut R) -> Result<Birth> {
    let n_data = state.n_data();
    let zeros = vec![0.0; n_data];
    let mut original: Vec<(usize, Option<usize>)> = Vec::new();

    let ensure_layer = |state: &mut ModelState, l: usize, original: &mut Vec<(usize, Option<usize>)>, rng: &mut R| {
        if l > state.depth() {
            let prior = state.hypers.layer.sample(rng);
            state.push_layer(prior);
            original.push((l, None));
        } else if !original.iter().any(|&(ol, _)| ol == l) {
            original.push((l, Some(state.width(l))));
        }
    };

    let new_unit = |state: &mut ModelState, l: usize, rng: &mut R| -> usize {
        let prior = state.layers[l].prior;
        let bias = normal(rng, prior.mu_gamma, prior.rho_gamma);
        let precision = crate::random::gamma(rng, prior.a, prior.b);
        state.push_unit(l, bias, precision, &zeros)
    };

    ensure_layer(state, m + 1, &mut original, rng);
    let unit = new_unit(state, m + 1, rng);
    let mut queue = std::collections::VecDeque::from([(m + 1, unit)]);
    while let Some((l, j)) = queue.pop_front() {
        if l >= DEFAULT_DEPTH_CAP {
            Birth { unit, weight: 0.0, values: Vec::new(), original }.undo(state);
            return Err(Error::Truncated { cap: DEFAULT_DEPTH_CAP, width: state.width(m + 1) });
        }
        let params = ibp_params_at(state, l, config, rng);
        let denom = (j + 1) as f64 + params.beta - 1.0;
        if l < state.depth() {
            ensure_layer(state, l + 1, &mut original, rng);
            let prior = state.layers[l + 1].prior;
            for p in 0..state.width(l + 1) {
                let eta = state.structure.edges(l + 1).column_sum(p);
                if eta > 0 && open01(rng) < eta as f64 / denom {
                    let w = normal(rng, prior.mu_w, prior.rho_w);
                    state.set_edge(l + 1, j, p, w);
                }
            }
        }
        let fresh = poisson(rng, params.alpha * params.beta / denom);
        if fresh > 0 {
            ensure_layer(state, l + 1, &mut original, rng);
            let prior = state.layers[l + 1].prior;
            for _ in 0..fresh {
                let p = new_unit(state, l + 1, rng);
                let w = normal(rng, prior.mu_w, prior.rho_w);
                state.set_edge(l + 1, j, p, w);
                queue.push_back((l + 1, p));
            }
        }
    }

    // Values top-down for every added unit.
    let added: Vec<(usize, usize)> = original
        .iter()
        .map(|&(l, w)| (l, w.unwrap_or(0)))
        .collect();
    let mut order = added.clone();
    order.sort_by(|a, b| b.0.cmp(&a.0));
    for (l, start) in order {
        for n in 0..n_data {
            for j in start..state.width(l) {
                let datum = &state.states.per_datum[n];
                let y = activation_of(&state.structure, &state.layers, datum, l, j);
                let u = sample_unit(rng, y, state.layers[l].precisions[j]);
                state.states.per_datum[n][l][j] = u;
            }
        }
    }

    let prior = state.layers[m + 1].prior;
    let weight = normal(rng, prior.mu_w, prior.rho_w);
    let values = state.states.iter().map(|d| d[m + 1][unit]).collect();
    Ok(Birth { unit, weight, values, original })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::bars;
    use crate::hypers::HyperParameters;
    use crate::random::seeded;

    fn toy(seed: u64) -> ModelState {
        let mut rng = seeded(seed);
        let data = Arc::new(bars(6, 3, 0.3, &mut rng));
        let hypers = HyperParameters::uniform(IbpParams { alpha: 2.0, beta: 1.5 });
        ModelState::sample_prior(data, hypers, &mut rng).unwrap()
    }

    #[test]
    fn birth_undo_restores_everything() {
        let config = SweepConfig::default();
        for seed in 0..20 {
            let mut state = toy(seed);
            let before = state.clone();
            let mut rng = seeded(100 + seed);
            for m in 0..=before.depth() {
                let birth = propose_birth(&mut state, m, &config, &mut rng).unwrap();
                assert!(state.structure.total_units() > before.structure.total_units());
                birth.undo(&mut state);
                assert_eq!(state.structure, before.structure);
                assert_eq!(state.layers, before.layers);
                assert_eq!(state.states, before.states);
            }
        }
    }

    #[test]
    fn flat_likelihood_edge_probability() {
        assert_eq!(edge_prior_probability(1, 1, 1.0), 1.0);
        assert!((edge_prior_probability(2, 5, 2.0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn first_birth_under_flat_likelihood_is_certain() {
        let p = IbpParams { alpha: 1.0, beta: 1.0 };
        let rate = singleton_rate(&p, 1);
        assert_eq!(rate, 1.0);
        assert!(birth_log_ratio(rate, 0, 0.0, 0.5).abs() < 1e-15);
    }

    #[test]
    fn birth_and_death_ratios_are_reciprocal() {
        let p = IbpParams { alpha: 2.7, beta: 0.4 };
        for customers in 1..6 {
            let rate = singleton_rate(&p, customers);
            for singles in 0..5 {
                for &lr in &[-3.0, 0.0, 1.7] {
                    for &pb in &[0.2, 0.5, 0.9] {
                        let b = birth_log_ratio(rate, singles, lr, pb);
                        let d = death_log_ratio(rate, singles + 1, -lr, pb);
                        assert!((b + d).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
