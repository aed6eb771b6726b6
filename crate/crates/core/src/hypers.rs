//! Hyperparameters: per-depth IBP parameters with their light-tailed priors,
//! and the global hyperpriors tying the layer-wise prior parameters together.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ibp::IbpParams;
use crate::network::PriorParams;
use crate::random::{gamma, normal};

/// Normal-gamma hyperprior: `rho ~ Gamma(shape, rate)`,
/// `mu | rho ~ Normal(mean, 1 / (kappa * rho))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGamma {
    pub mean: f64,
    pub kappa: f64,
    pub shape: f64,
    pub rate: f64,
}

impl Default for NormalGamma {
    fn default() -> Self {
        Self {
            mean: 0.0,
            kappa: 1.0,
            shape: 1.0,
            rate: 1.0,
        }
    }
}

impl NormalGamma {
    pub fn log_density(&self, mu: f64, rho: f64) -> f64 {
        gamma_log_pdf(rho, self.shape, self.rate) + normal_log_pdf(mu, self.mean, self.kappa * rho)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let rho = gamma(rng, self.shape, self.rate);
        (normal(rng, self.mean, self.kappa * rho), rho)
    }

    /// Conjugate posterior given observations `xs`.
    pub fn posterior(&self, xs: &[f64]) -> NormalGamma {
        if xs.is_empty() {
            return *self;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let kappa = self.kappa + n;
        NormalGamma {
            mean: (self.kappa * self.mean + n * mean) / kappa,
            kappa,
            shape: self.shape + n / 2.0,
            rate: self.rate + 0.5 * ss + self.kappa * n * (mean - self.mean).powi(2) / (2.0 * kappa),
        }
    }
}

/// Hyperpriors over each layer's [`PriorParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerHyperprior {
    pub weight: NormalGamma,
    pub bias: NormalGamma,
    /// Gamma (shape, rate) over the precision prior's shape `a`.
    pub precision_shape: (f64, f64),
    /// Gamma (shape, rate) over the precision prior's rate `b`.
    pub precision_rate: (f64, f64),
}

impl Default for LayerHyperprior {
    fn default() -> Self {
        Self {
            weight: NormalGamma::default(),
            bias: NormalGamma::default(),
            precision_shape: (1.0, 1.0),
            precision_rate: (1.0, 1.0),
        }
    }
}

impl LayerHyperprior {
    pub fn log_density(&self, p: &PriorParams) -> f64 {
        self.weight.log_density(p.mu_w, p.rho_w)
            + self.bias.log_density(p.mu_gamma, p.rho_gamma)
            + gamma_log_pdf(p.a, self.precision_shape.0, self.precision_shape.1)
            + gamma_log_pdf(p.b, self.precision_rate.0, self.precision_rate.1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PriorParams {
        let (mu_w, rho_w) = self.weight.sample(rng);
        let (mu_gamma, rho_gamma) = self.bias.sample(rng);
        PriorParams {
            mu_w,
            rho_w,
            mu_gamma,
            rho_gamma,
            a: gamma(rng, self.precision_shape.0, self.precision_shape.1),
            b: gamma(rng, self.precision_rate.0, self.precision_rate.1),
        }
    }
}

/// Per-depth IBP parameters plus their priors.
///
/// `ibp[m]` governs the restaurant whose customers are the units of layer
/// `m`. Depths past the end of the vector reuse the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParameters {
    pub ibp: Vec<IbpParams>,
    /// Exponential prior rates on alpha and beta.
    pub alpha_rate: f64,
    pub beta_rate: f64,
    /// Strict upper bounds keeping every depth below a common ceiling.
    pub alpha_bound: f64,
    pub beta_bound: f64,
    pub layer: LayerHyperprior,
}

impl Default for HyperParameters {
    fn default() -> Self {
        Self::uniform(IbpParams { alpha: 1.0, beta: 1.0 })
    }
}

impl HyperParameters {
    pub fn uniform(params: IbpParams) -> Self {
        Self {
            ibp: vec![params],
            alpha_rate: 1.0,
            beta_rate: 1.0,
            alpha_bound: 20.0,
            beta_bound: 20.0,
            layer: LayerHyperprior::default(),
        }
    }

    pub fn at(&self, depth: usize) -> IbpParams {
        self.ibp[depth.min(self.ibp.len() - 1)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.ibp.is_empty() {
            return Err(Error::param("hypers", "need at least one depth"));
        }
        for p in &self.ibp {
            p.validate()?;
            if p.alpha >= self.alpha_bound || p.beta >= self.beta_bound {
                return Err(Error::param("hypers", "alpha/beta must lie below their bounds"));
            }
        }
        if !(self.alpha_rate > 0.0 && self.beta_rate > 0.0) {
            return Err(Error::param("hypers", "prior rates must be positive"));
        }
        Ok(())
    }

    /// Log prior of the IBP parameters at one depth (exponential, truncated).
    pub fn ibp_log_prior(&self, p: &IbpParams) -> f64 {
        if !(p.alpha > 0.0 && p.alpha < self.alpha_bound && p.beta > 0.0 && p.beta < self.beta_bound) {
            return f64::NEG_INFINITY;
        }
        -self.alpha_rate * p.alpha - self.beta_rate * p.beta
    }

    /// Draws one depth's parameters from the truncated exponential priors.
    pub fn sample_ibp_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> IbpParams {
        let draw = |rng: &mut R, rate: f64, bound: f64| loop {
            let u: f64 = crate::random::open01(rng);
            let x = -u.ln() / rate;
            if x < bound {
                return x;
            }
        };
        IbpParams {
            alpha: draw(rng, self.alpha_rate, self.alpha_bound),
            beta: draw(rng, self.beta_rate, self.beta_bound),
        }
    }
}

pub(crate) fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - statrs::function::gamma::ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

pub(crate) fn normal_log_pdf(x: f64, mean: f64, precision: f64) -> f64 {
    0.5 * (precision / (2.0 * std::f64::consts::PI)).ln() - 0.5 * precision * (x - mean).powi(2)
}
