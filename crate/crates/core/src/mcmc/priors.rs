//! Updates of the layer-wise prior parameters and of the per-depth IBP
//! parameters.

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hypers::gamma_log_pdf;
use crate::ibp::{beta_harmonic, EdgeMatrix, IbpParams};
use crate::network::ModelState;
use crate::random::{gamma, open01, standard_normal};

use super::SweepConfig;

/// Accept counts of the random-walk moves in this module.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct WalkCounts {
    pub attempts: u64,
    pub accepts: u64,
}

impl std::ops::AddAssign for WalkCounts {
    fn add_assign(&mut self, o: Self) {
        self.attempts += o.attempts;
        self.accepts += o.accepts;
    }
}

/// Resamples the prior parameters of layer `m`: the weight and bias
/// normal-gamma pairs and the precision rate conjugately, the precision
/// shape by a log-scale random walk.
pub fn sample_layer_prior_params<R: Rng + ?Sized>(
    state: &mut ModelState,
    m: usize,
    config: &SweepConfig,
    rng: &mut R,
) -> Result<WalkCounts> {
    if m > state.depth() {
        return Err(Error::param("layer", format!("no layer {m}")));
    }
    let hp = state.hypers.layer;
    let lp = &mut state.layers[m];
    let weights: Vec<f64> = if m == 0 {
        Vec::new()
    } else {
        state.structure.edges(m).entries().map(|(c, p)| lp.weights.get(c, p)).collect()
    };
    (lp.prior.mu_w, lp.prior.rho_w) = hp.weight.posterior(&weights).sample(rng);
    (lp.prior.mu_gamma, lp.prior.rho_gamma) = hp.bias.posterior(&lp.biases).sample(rng);

    let k = lp.precisions.len() as f64;
    let sum_nu: f64 = lp.precisions.iter().sum();
    let sum_log_nu: f64 = lp.precisions.iter().map(|v| v.ln()).sum();
    let (sa, ra) = hp.precision_shape;
    let (sb, rb) = hp.precision_rate;
    lp.prior.b = gamma(rng, sb + k * lp.prior.a, rb + sum_nu);

    let b = lp.prior.b;
    let log_target = |a: f64| gamma_log_pdf(a, sa, ra) + k * (a * b.ln() - ln_gamma(a)) + (a - 1.0) * sum_log_nu;
    let a = lp.prior.a;
    let proposal = a * (config.shape_step_size * standard_normal(rng)).exp();
    let log_ratio = log_target(proposal) - log_target(a) + proposal.ln() - a.ln();
    let mut counts = WalkCounts { attempts: 1, accepts: 0 };
    if open01(rng).ln() < log_ratio {
        lp.prior.a = proposal;
        counts.accepts = 1;
    }
    if !(lp.prior.a > 0.0 && lp.prior.b > 0.0 && lp.prior.rho_w > 0.0 && lp.prior.rho_gamma > 0.0) {
        return Err(Error::NonFinite("layer prior update"));
    }
    Ok(counts)
}

/// Statistics of a customer-dish matrix sufficient for its class
/// likelihood as a function of `(alpha, beta)`.
#[derive(Debug, Clone)]
pub struct IbpSuffStats {
    customers: usize,
    column_sums: Vec<usize>,
}

impl IbpSuffStats {
    pub fn new(z: &EdgeMatrix) -> Self {
        Self {
            customers: z.rows(),
            column_sums: (0..z.cols()).map(|p| z.column_sum(p)).filter(|&s| s > 0).collect(),
        }
    }

    /// Class log likelihood up to terms free of `(alpha, beta)`.
    pub fn log_likelihood(&self, p: &IbpParams) -> f64 {
        let n = self.customers as f64;
        let mut lp = self.column_sums.len() as f64 * (p.alpha * p.beta).ln() - p.alpha * beta_harmonic(self.customers, p.beta);
        for &s in &self.column_sums {
            lp += ln_gamma(n - s as f64 + p.beta) - ln_gamma(n + p.beta);
        }
        lp
    }
}

/// Log-scale random walks on alpha and beta at every realized depth,
/// targeting the class likelihood of that depth's connectivity times the
/// truncated exponential priors. The per-depth vector is resized to the
/// current depth plus one.
pub fn sample_cibp_hypers<R: Rng + ?Sized>(state: &mut ModelState, config: &SweepConfig, rng: &mut R) -> WalkCounts {
    let depth = state.depth();
    while state.hypers.ibp.len() <= depth {
        let p = state.hypers.sample_ibp_prior(rng);
        state.hypers.ibp.push(p);
    }
    state.hypers.ibp.truncate(depth + 1);
    let mut counts = WalkCounts::default();
    for m in 0..=depth {
        let stats = if m < depth {
            IbpSuffStats::new(state.structure.edges(m + 1))
        } else {
            IbpSuffStats { customers: state.width(m), column_sums: Vec::new() }
        };
        for which in 0..2 {
            let current = state.hypers.ibp[m];
            let mut proposal = current;
            let step = (config.hyper_step_size * standard_normal(rng)).exp();
            let (old, new) = if which == 0 {
                proposal.alpha *= step;
                (current.alpha, proposal.alpha)
            } else {
                proposal.beta *= step;
                (current.beta, proposal.beta)
            };
            let prior_new = state.hypers.ibp_log_prior(&proposal);
            counts.attempts += 1;
            if prior_new == f64::NEG_INFINITY {
                continue;
            }
            let log_ratio = stats.log_likelihood(&proposal) - stats.log_likelihood(&current) + prior_new
                - state.hypers.ibp_log_prior(&current)
                + new.ln()
                - old.ln();
            if open01(rng).ln() < log_ratio {
                state.hypers.ibp[m] = proposal;
                counts.accepts += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ibp::sample_ibp;
    use crate::random::seeded;

    #[test]
    fn suff_stats_differences_match_full_class_probability() {
        let mut rng = seeded(4);
        let z = sample_ibp(12, &IbpParams { alpha: 3.0, beta: 1.2 }, &mut rng).unwrap();
        let stats = IbpSuffStats::new(&z);
        let a = IbpParams { alpha: 2.1, beta: 0.7 };
        let b = IbpParams { alpha: 4.4, beta: 3.3 };
        let full = z.ibp_log_prob(&a) - z.ibp_log_prob(&b);
        let short = stats.log_likelihood(&a) - stats.log_likelihood(&b);
        assert!((full - short).abs() < 1e-9, "{full} vs {short}");
    }
}
