//! Conjugate updates for weights, biases and precisions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{activation_of, logit, ModelState};
use crate::random::{gamma, normal};

/// Gaussian conditional `(mean, precision)` of the weight on the edge from
/// unit `parent` of layer `m` into unit `child` of layer `m - 1`.
pub fn weight_conditional(state: &ModelState, m: usize, child: usize, parent: usize) -> Result<(f64, f64)> {
    if m == 0 || m > state.depth() || !state.structure.edges(m).get(child, parent) {
        return Err(Error::param("edge", format!("no edge ({m}, {child}, {parent})")));
    }
    let lp = &state.layers[m];
    let nu = state.layers[m - 1].precisions[child];
    let w = lp.weights.get(child, parent);
    let (mut suu, mut sur) = (0.0, 0.0);
    for datum in state.states.iter() {
        let u = datum[m][parent];
        let xi = activation_of(&state.structure, &state.layers, datum, m - 1, child) - w * u;
        suu += u * u;
        sur += u * (logit(datum[m - 1][child]) - xi);
    }
    let precision = lp.prior.rho_w + nu * suu;
    let mean = (lp.prior.rho_w * lp.prior.mu_w + nu * sur) / precision;
    Ok((mean, precision))
}

pub fn gibbs_weight<R: Rng + ?Sized>(state: &mut ModelState, m: usize, child: usize, parent: usize, rng: &mut R) -> Result<f64> {
    let (mean, precision) = weight_conditional(state, m, child, parent)?;
    let w = normal(rng, mean, precision);
    state.layers[m].weights.set(child, parent, w);
    Ok(w)
}

/// Gaussian conditional `(mean, precision)` of the bias of unit `k` in layer
/// `m`.
pub fn bias_conditional(state: &ModelState, m: usize, k: usize) -> Result<(f64, f64)> {
    check_unit(state, m, k)?;
    let lp = &state.layers[m];
    let (nu, gamma0) = (lp.precisions[k], lp.biases[k]);
    let mut sum = 0.0;
    for datum in state.states.iter() {
        let chi = activation_of(&state.structure, &state.layers, datum, m, k) - gamma0;
        sum += logit(datum[m][k]) - chi;
    }
    let precision = lp.prior.rho_gamma + state.n_data() as f64 * nu;
    let mean = (lp.prior.rho_gamma * lp.prior.mu_gamma + nu * sum) / precision;
    Ok((mean, precision))
}

pub fn gibbs_bias<R: Rng + ?Sized>(state: &mut ModelState, m: usize, k: usize, rng: &mut R) -> Result<f64> {
    let (mean, precision) = bias_conditional(state, m, k)?;
    let g = normal(rng, mean, precision);
    state.layers[m].biases[k] = g;
    Ok(g)
}

/// Gamma conditional `(shape, rate)` of the precision of unit `k` in layer
/// `m`.
pub fn precision_conditional(state: &ModelState, m: usize, k: usize) -> Result<(f64, f64)> {
    check_unit(state, m, k)?;
    let prior = &state.layers[m].prior;
    let mut ss = 0.0;
    for datum in state.states.iter() {
        let y = activation_of(&state.structure, &state.layers, datum, m, k);
        ss += (logit(datum[m][k]) - y).powi(2);
    }
    Ok((prior.a + state.n_data() as f64 / 2.0, prior.b + 0.5 * ss))
}

pub fn gibbs_precision<R: Rng + ?Sized>(state: &mut ModelState, m: usize, k: usize, rng: &mut R) -> Result<f64> {
    let (shape, rate) = precision_conditional(state, m, k)?;
    let v = gamma(rng, shape, rate);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::NonFinite("precision update"));
    }
    state.layers[m].precisions[k] = v;
    Ok(v)
}

fn check_unit(state: &ModelState, m: usize, k: usize) -> Result<()> {
    if m > state.depth() || k >= state.width(m) {
        return Err(Error::param("unit", format!("no unit ({m}, {k})")));
    }
    Ok(())
}
