//! Layered nonlinear Gaussian belief networks: structure, parameters, unit
//! states and every deterministic density computation over them.
//!
//! Layer `0` is visible. The edges from layer `m` into layer `m - 1` are held
//! by [`NetworkStructure::edges`]`(m)` for `m >= 1`, with the matching weights
//! in `layers[m].weights`. A unit's value is
//! `u = sigmoid(y + noise)` where `y` is its bias plus the weighted sum of its
//! parents and the noise is Gaussian with the unit's precision.

use std::sync::Arc;

use rand::Rng;
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::hypers::{gamma_log_pdf, normal_log_pdf, HyperParameters};
use crate::ibp::{sample_cibp, EdgeMatrix, DEFAULT_DEPTH_CAP};
use crate::random::{gamma, normal, standard_normal};

/// Stored unit values are kept inside `[-STATE_LIMIT, STATE_LIMIT]`.
pub const STATE_LIMIT: f64 = 1.0 - 1e-12;

/// Decreasing sigmoid from the real line onto `(-1, 1)`:
/// `2 / (1 + e^x) - 1`, evaluated as `-tanh(x / 2)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    -(0.5 * x).tanh()
}

/// Inverse of [`sigmoid`]: `ln((1 - u) / (1 + u))`.
pub fn sigmoid_inverse(u: f64) -> Result<f64> {
    if !(u.abs() < 1.0) {
        return Err(Error::param("u", format!("must lie strictly inside (-1, 1), got {u}")));
    }
    Ok(logit(u))
}

#[inline]
pub(crate) fn logit(u: f64) -> f64 {
    (-u).ln_1p() - u.ln_1p()
}

#[inline]
pub fn clamp_state(u: f64) -> f64 {
    u.clamp(-STATE_LIMIT, STATE_LIMIT)
}

/// Log density of a unit value given its activation and noise precision.
pub fn unit_log_density(u: f64, y: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param("nu", format!("must be positive, got {nu}")));
    }
    let x = sigmoid_inverse(u)?;
    Ok(unit_log_density_unchecked(u, x, y, nu))
}

/// `x` must equal `sigmoid_inverse(u)`.
#[inline]
pub(crate) fn unit_log_density_unchecked(u: f64, x: f64, y: f64, nu: f64) -> f64 {
    -0.5 * nu * (x - y).powi(2) + 0.5 * (nu / (2.0 * std::f64::consts::PI)).ln()
        - (0.5 * (1.0 - u * u)).ln()
}

/// Draws a unit value from its conditional given activation `y`.
#[inline]
pub fn sample_unit<R: Rng + ?Sized>(rng: &mut R, y: f64, nu: f64) -> f64 {
    clamp_state(sigmoid(y + standard_normal(rng) / nu.sqrt()))
}

/// Mean of a unit's conditional distribution, `E[sigmoid(y + noise)]`.
///
/// Splits `tanh(x/2) = sign(x) - sign(x) * 2 / (1 + e^|x|)`: the sign part
/// has a closed form and the remainder is smooth on each side of zero.
pub fn unit_mean(y: f64, nu: f64) -> f64 {
    let sd = 1.0 / nu.sqrt();
    let e_sign = 1.0 - erfc(y * (0.5 * nu).sqrt());
    let lo = (y - 9.0 * sd).max(-45.0);
    let hi = (y + 9.0 * sd).min(45.0);
    // Remainder on one side of zero, `side` being the sign of x there.
    let rem = |side: f64| {
        move |x: f64| -> f64 { -side * 2.0 / (1.0 + x.abs().exp()) * (-0.5 * nu * (x - y).powi(2)).exp() }
    };
    let mut e_rem = 0.0;
    if lo < 0.0 && lo < hi {
        e_rem += simpson(rem(-1.0), lo, hi.min(0.0), 256);
    }
    if hi > 0.0 && lo < hi {
        e_rem += simpson(rem(1.0), lo.max(0.0), hi, 256);
    }
    e_rem *= (nu / (2.0 * std::f64::consts::PI)).sqrt();
    -(e_sign + e_rem)
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Finite realized prefix of the cascade of edge matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStructure {
    visible: usize,
    matrices: Vec<EdgeMatrix>,
}

impl NetworkStructure {
    pub fn empty(visible: usize) -> Self {
        Self {
            visible,
            matrices: Vec::new(),
        }
    }

    pub fn from_matrices(visible: usize, matrices: Vec<EdgeMatrix>) -> Result<Self> {
        let s = Self { visible, matrices };
        s.check_shapes()?;
        Ok(s)
    }

    /// Number of realized hidden layers.
    #[inline]
    pub fn depth(&self) -> usize {
        self.matrices.len()
    }

    #[inline]
    pub fn visible_width(&self) -> usize {
        self.visible
    }

    /// Width of layer `m`, zero beyond the realized depth.
    pub fn width(&self, m: usize) -> usize {
        match m {
            0 => self.visible,
            _ => self.matrices.get(m - 1).map_or(0, EdgeMatrix::cols),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..=self.depth()).map(|m| self.width(m)).collect()
    }

    /// Edges from layer `m` into layer `m - 1`, for `1 <= m <= depth`.
    #[inline]
    pub fn edges(&self, m: usize) -> &EdgeMatrix {
        &self.matrices[m - 1]
    }

    #[inline]
    pub(crate) fn edges_mut(&mut self, m: usize) -> &mut EdgeMatrix {
        &mut self.matrices[m - 1]
    }

    pub fn matrices(&self) -> &[EdgeMatrix] {
        &self.matrices
    }

    pub fn total_units(&self) -> usize {
        self.widths().iter().sum()
    }

    pub fn edge_count(&self) -> usize {
        self.matrices.iter().map(EdgeMatrix::edge_count).sum()
    }

    fn check_shapes(&self) -> Result<()> {
        let mut rows = self.visible;
        for (i, z) in self.matrices.iter().enumerate() {
            if z.rows() != rows {
                return Err(Error::Inconsistent(format!(
                    "matrix {} has {} rows but layer {} has {} units",
                    i + 1,
                    z.rows(),
                    i,
                    rows
                )));
            }
            rows = z.cols();
        }
        Ok(())
    }

    /// Shape consistency plus: every stored parent has at least one child
    /// and no realized layer is empty.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        for (i, z) in self.matrices.iter().enumerate() {
            if z.cols() == 0 {
                return Err(Error::Inconsistent(format!("layer {} is empty", i + 1)));
            }
            if z.active_columns() != z.cols() {
                return Err(Error::Inconsistent(format!("layer {} holds childless units", i + 1)));
            }
        }
        Ok(())
    }

    /// Adjacency-list export: a header `layers L widths K0 K1 ...` followed by
    /// one `m child parent` line per edge.
    pub fn to_adjacency(&self) -> String {
        let mut out = format!("layers {} widths", self.depth());
        for w in self.widths() {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
        for (i, z) in self.matrices.iter().enumerate() {
            for (c, p) in z.entries() {
                out.push_str(&format!("{} {} {}\n", i + 1, c, p));
            }
        }
        out
    }

    pub fn from_adjacency(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Checkpoint {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() < 4 || tok[0] != "layers" || tok[2] != "widths" {
            return Err(bad(1, "expected `layers L widths K0 ...`"));
        }
        let depth: usize = tok[1].parse().map_err(|_| bad(1, "bad layer count"))?;
        let widths: Vec<usize> = tok[3..]
            .iter()
            .map(|t| t.parse().map_err(|_| bad(1, "bad width")))
            .collect::<Result<_>>()?;
        if widths.len() != depth + 1 {
            return Err(bad(1, "width count does not match layer count"));
        }
        let mut matrices: Vec<EdgeMatrix> = (1..=depth)
            .map(|m| EdgeMatrix::new(widths[m - 1], widths[m]))
            .collect();
        for (i, line) in lines {
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(i + 1, "bad edge field")))
                .collect::<Result<_>>()?;
            let [m, c, p] = v[..] else {
                return Err(bad(i + 1, "expected `m child parent`"));
            };
            if m == 0 || m > depth || c >= widths[m - 1] || p >= widths[m] {
                return Err(bad(i + 1, "edge out of range"));
            }
            matrices[m - 1].set(c, p, true);
        }
        Self::from_matrices(widths[0], matrices)
    }
}

/// Layer-wise prior parameters: weights `~ N(mu_w, 1/rho_w)`, biases
/// `~ N(mu_gamma, 1/rho_gamma)`, precisions `~ Gamma(a, b)` (rate `b`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub mu_w: f64,
    pub rho_w: f64,
    pub mu_gamma: f64,
    pub rho_gamma: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for PriorParams {
    fn default() -> Self {
        Self {
            mu_w: 0.0,
            rho_w: 1.0,
            mu_gamma: 0.0,
            rho_gamma: 1.0,
            a: 1.0,
            b: 1.0,
        }
    }
}

impl PriorParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho_w > 0.0
            && self.rho_gamma > 0.0
            && self.a > 0.0
            && self.b > 0.0
            && self.mu_w.is_finite()
            && self.mu_gamma.is_finite();
        if !ok {
            return Err(Error::param("prior_params", format!("{self:?}")));
        }
        Ok(())
    }
}

/// Weights into the layer below, plus per-unit biases and precisions.
///
/// `weights` is `K(m-1) x K(m)`; only entries on present edges carry
/// meaning and absent ones are held at zero. Layer `0` has a `0 x K(0)`
/// weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParameters {
    pub weights: Dense<f64>,
    pub biases: Vec<f64>,
    pub precisions: Vec<f64>,
    pub prior: PriorParams,
}

impl LayerParameters {
    pub fn new(below: usize, width: usize, prior: PriorParams) -> Self {
        Self {
            weights: Dense::new(below, width),
            biases: vec![0.0; width],
            precisions: vec![1.0; width],
            prior,
        }
    }

    pub fn width(&self) -> usize {
        self.biases.len()
    }
}

/// Per-datum unit values for every realized layer. Layer `0` holds the
/// visible values: observed entries plus current imputations of missing
/// ones.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStates {
    pub(crate) per_datum: Vec<Vec<Vec<f64>>>,
}

impl UnitStates {
    pub fn from_nested(per_datum: Vec<Vec<Vec<f64>>>) -> Self {
        Self { per_datum }
    }

    pub fn len(&self) -> usize {
        self.per_datum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_datum.is_empty()
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize, k: usize) -> f64 {
        self.per_datum[n][m][k]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, k: usize, u: f64) {
        self.per_datum[n][m][k] = clamp_state(u);
    }

    pub fn layer(&self, n: usize, m: usize) -> &[f64] {
        &self.per_datum[n][m]
    }

    pub fn datum(&self, n: usize) -> &[Vec<f64>] {
        &self.per_datum[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<Vec<f64>>> {
        self.per_datum.iter()
    }
}

/// Activation of unit `k` in layer `m` for one datum's states.
#[inline]
pub(crate) fn activation_of(
    structure: &NetworkStructure,
    layers: &[LayerParameters],
    datum: &[Vec<f64>],
    m: usize,
    k: usize,
) -> f64 {
    let mut y = layers[m].biases[k];
    if m < structure.depth() {
        let w = &layers[m + 1].weights;
        let above = &datum[m + 1];
        for p in structure.edges(m + 1).parents_of(k) {
            y += w.get(k, p) * above[p];
        }
    }
    y
}

/// The aggregate sampler state.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub structure: NetworkStructure,
    pub layers: Vec<LayerParameters>,
    pub states: UnitStates,
    pub data: Arc<Dataset>,
    pub hypers: HyperParameters,
}

impl ModelState {
    pub fn new(
        structure: NetworkStructure,
        layers: Vec<LayerParameters>,
        states: UnitStates,
        data: Arc<Dataset>,
        hypers: HyperParameters,
    ) -> Result<Self> {
        let s = Self {
            structure,
            layers,
            states,
            data,
            hypers,
        };
        s.check_consistency()?;
        Ok(s)
    }

    /// Draws a complete state from the prior: a cascade structure, layer
    /// prior parameters from the hyperpriors, parameters from their layer
    /// priors and hidden states top-down. Observed visible entries are taken
    /// from `data`; missing ones are drawn from their conditionals.
    pub fn sample_prior<R: Rng + ?Sized>(data: Arc<Dataset>, hypers: HyperParameters, rng: &mut R) -> Result<Self> {
        hypers.validate()?;
        let visible = data.width();
        let depth_params: Vec<_> = (0..hypers.ibp.len()).map(|d| hypers.at(d)).collect();
        let structure = sample_cibp(visible, &depth_params, DEFAULT_DEPTH_CAP, rng)?.into_complete(DEFAULT_DEPTH_CAP)?;
        let mut layers = Vec::with_capacity(structure.depth() + 1);
        for m in 0..=structure.depth() {
            let prior = hypers.layer.sample(rng);
            let below = if m == 0 { 0 } else { structure.width(m - 1) };
            layers.push(sample_layer_parameters(&structure, m, below, prior, rng));
        }
        let mut per_datum = Vec::with_capacity(data.len());
        for n in 0..data.len() {
            let mut datum = ancestral_layers(&structure, &layers, rng);
            for (k, u) in datum[0].iter_mut().enumerate() {
                if data.is_observed(n, k) {
                    *u = clamp_state(data.observations[n][k]);
                }
            }
            per_datum.push(datum);
        }
        Self::new(structure, layers, UnitStates { per_datum }, data, hypers)
    }

    #[inline]
    pub fn n_data(&self) -> usize {
        self.states.len()
    }

    #[inline]
    pub fn depth(&self) -> usize {
        self.structure.depth()
    }

    #[inline]
    pub fn width(&self, m: usize) -> usize {
        self.structure.width(m)
    }

    pub fn activation(&self, m: usize, n: usize) -> Result<Vec<f64>> {
        if m > self.depth() || n >= self.n_data() {
            return Err(Error::Inconsistent(format!("no layer {m} / datum {n}")));
        }
        Ok(activation_vector(&self.structure, &self.layers, self.states.datum(n), m))
    }

    /// Index consistency across structure, parameters and states.
    pub fn check_consistency(&self) -> Result<()> {
        let depth = self.depth();
        if self.layers.len() != depth + 1 {
            return Err(Error::Inconsistent(format!(
                "{} parameter layers for {} realized layers",
                self.layers.len(),
                depth + 1
            )));
        }
        if self.data.width() != self.structure.visible_width() {
            return Err(Error::Inconsistent("data width differs from visible width".into()));
        }
        if self.states.len() != self.data.len() {
            return Err(Error::Inconsistent("state count differs from data count".into()));
        }
        for (m, lp) in self.layers.iter().enumerate() {
            let k = self.width(m);
            let below = if m == 0 { 0 } else { self.width(m - 1) };
            if lp.biases.len() != k || lp.precisions.len() != k || lp.weights.cols() != k || lp.weights.rows() != below {
                return Err(Error::Inconsistent(format!("layer {m} parameter shapes")));
            }
            if lp.precisions.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Inconsistent(format!("layer {m} has a non-positive precision")));
            }
            lp.prior.validate()?;
            if m >= 1 {
                let z = self.structure.edges(m);
                for c in 0..below {
                    for p in 0..k {
                        if !z.get(c, p) && lp.weights.get(c, p) != 0.0 {
                            return Err(Error::Inconsistent(format!("weight without edge in layer {m}")));
                        }
                    }
                }
            }
        }
        for datum in self.states.iter() {
            if datum.len() != depth + 1 {
                return Err(Error::Inconsistent("state layer count".into()));
            }
            for (m, layer) in datum.iter().enumerate() {
                if layer.len() != self.width(m) {
                    return Err(Error::Inconsistent(format!("state width in layer {m}")));
                }
                if layer.iter().any(|u| !(u.abs() < 1.0)) {
                    return Err(Error::Inconsistent(format!("state outside (-1, 1) in layer {m}")));
                }
            }
        }
        Ok(())
    }

    /// Structural invariants plus consistency.
    pub fn validate(&self) -> Result<()> {
        self.structure.validate()?;
        self.check_consistency()
    }

    /// Sum of unit log densities over the units of layer `m` and all data.
    pub fn layer_log_likelihood(&self, m: usize) -> f64 {
        let lp = &self.layers[m];
        let mut total = 0.0;
        for datum in self.states.iter() {
            for (k, &u) in datum[m].iter().enumerate() {
                let y = activation_of(&self.structure, &self.layers, datum, m, k);
                total += unit_log_density_unchecked(u, logit(u), y, lp.precisions[k]);
            }
        }
        total
    }

    /// Sum of unit log densities over every realized unit and datum.
    pub fn unit_log_likelihood(&self) -> f64 {
        (0..=self.depth()).map(|m| self.layer_log_likelihood(m)).sum()
    }

    /// Log priors of weights, biases and precisions, plus the hyperprior
    /// factors over each realized layer's prior parameters.
    pub fn parameter_log_prior(&self) -> f64 {
        let mut total = 0.0;
        for (m, lp) in self.layers.iter().enumerate() {
            let pr = &lp.prior;
            if m >= 1 {
                for (c, p) in self.structure.edges(m).entries() {
                    total += normal_log_pdf(lp.weights.get(c, p), pr.mu_w, pr.rho_w);
                }
            }
            for &g in &lp.biases {
                total += normal_log_pdf(g, pr.mu_gamma, pr.rho_gamma);
            }
            for &v in &lp.precisions {
                total += gamma_log_pdf(v, pr.a, pr.b);
            }
            total += self.hypers.layer.log_density(pr);
        }
        total
    }

    pub fn joint_log_density(&self) -> Result<f64> {
        self.check_consistency()?;
        Ok(self.unit_log_likelihood() + self.parameter_log_prior())
    }

    /// Appends an empty hidden layer below the current deepest one.
    pub(crate) fn push_layer(&mut self, prior: PriorParams) {
        let below = self.width(self.depth());
        self.structure.matrices.push(EdgeMatrix::new(below, 0));
        self.layers.push(LayerParameters::new(below, 0, prior));
        for datum in &mut self.states.per_datum {
            datum.push(Vec::new());
        }
    }

    /// Drops the deepest layer, which must be empty.
    pub(crate) fn pop_empty_layer(&mut self) {
        let m = self.depth();
        debug_assert!(m >= 1 && self.width(m) == 0);
        self.structure.matrices.pop();
        self.layers.pop();
        for datum in &mut self.states.per_datum {
            datum.pop();
        }
    }

    /// Appends a unit to hidden layer `m` with the given per-datum values.
    pub(crate) fn push_unit(&mut self, m: usize, bias: f64, precision: f64, values: &[f64]) -> usize {
        debug_assert!(m >= 1 && m <= self.depth());
        self.structure.edges_mut(m).push_col();
        self.layers[m].weights.push_col();
        if m < self.depth() {
            self.structure.edges_mut(m + 1).push_row();
            self.layers[m + 1].weights.push_row();
        }
        self.layers[m].biases.push(bias);
        self.layers[m].precisions.push(precision);
        for (datum, &u) in self.states.per_datum.iter_mut().zip(values) {
            datum[m].push(clamp_state(u));
        }
        self.width(m) - 1
    }

    /// Removes unit `k` of hidden layer `m` with its edges, parameters and
    /// states. Deeper units left without children are not touched.
    pub(crate) fn remove_unit(&mut self, m: usize, k: usize) {
        debug_assert!(m >= 1);
        self.structure.edges_mut(m).remove_col(k);
        self.layers[m].weights.remove_col(k);
        if m < self.depth() {
            self.structure.edges_mut(m + 1).remove_row(k);
            self.layers[m + 1].weights.remove_row(k);
        }
        self.layers[m].biases.remove(k);
        self.layers[m].precisions.remove(k);
        for datum in &mut self.states.per_datum {
            datum[m].remove(k);
        }
    }

    #[inline]
    pub(crate) fn set_edge(&mut self, m: usize, child: usize, parent: usize, weight: f64) {
        self.structure.edges_mut(m).set(child, parent, true);
        self.layers[m].weights.set(child, parent, weight);
    }

    #[inline]
    pub(crate) fn clear_edge(&mut self, m: usize, child: usize, parent: usize) {
        self.structure.edges_mut(m).set(child, parent, false);
        self.layers[m].weights.set(child, parent, 0.0);
    }

    /// Removes every hidden unit with no directed path to a visible unit,
    /// then any trailing empty layers. Returns the number of units removed.
    pub fn prune_non_ancestors(&mut self) -> usize {
        let mut removed = 0;
        let mut m = 1;
        while m <= self.depth() {
            let z = self.structure.edges(m);
            let orphans: Vec<usize> = (0..z.cols()).filter(|&p| z.column_sum(p) == 0).collect();
            for &k in orphans.iter().rev() {
                self.remove_unit(m, k);
                removed += 1;
            }
            if self.width(m) == 0 {
                // Nothing deeper can reach the visibles.
                while self.depth() > m {
                    removed += self.width(self.depth());
                    self.truncate_deepest();
                }
                self.pop_empty_layer();
                break;
            }
            m += 1;
        }
        removed
    }

    fn truncate_deepest(&mut self) {
        self.structure.matrices.pop();
        self.layers.pop();
        for datum in &mut self.states.per_datum {
            datum.pop();
        }
    }

    /// Relabels the units of hidden layer `m`: new unit `j` is old unit
    /// `order[j]`.
    pub fn permute_layer(&mut self, m: usize, order: &[usize]) -> Result<()> {
        let k = self.width(m);
        let mut seen = vec![false; k];
        if m == 0 || order.len() != k || order.iter().any(|&o| o >= k || std::mem::replace(&mut seen[o], true)) {
            return Err(Error::param("order", "must be a permutation of a hidden layer"));
        }
        self.structure.edges_mut(m).permute_cols(order);
        self.layers[m].weights.permute_cols(order);
        if m < self.depth() {
            self.structure.edges_mut(m + 1).permute_rows(order);
            self.layers[m + 1].weights.permute_rows(order);
        }
        let lp = &mut self.layers[m];
        lp.biases = order.iter().map(|&o| lp.biases[o]).collect();
        lp.precisions = order.iter().map(|&o| lp.precisions[o]).collect();
        for datum in &mut self.states.per_datum {
            datum[m] = order.iter().map(|&o| datum[m][o]).collect();
        }
        Ok(())
    }
}

pub(crate) fn activation_vector(
    structure: &NetworkStructure,
    layers: &[LayerParameters],
    datum: &[Vec<f64>],
    m: usize,
) -> Vec<f64> {
    (0..structure.width(m))
        .map(|k| activation_of(structure, layers, datum, m, k))
        .collect()
}

/// Draws parameters for layer `m` of `structure` from the layer prior.
pub(crate) fn sample_layer_parameters<R: Rng + ?Sized>(
    structure: &NetworkStructure,
    m: usize,
    below: usize,
    prior: PriorParams,
    rng: &mut R,
) -> LayerParameters {
    let width = structure.width(m);
    let mut lp = LayerParameters::new(below, width, prior);
    if m >= 1 {
        for (c, p) in structure.edges(m).entries() {
            lp.weights.set(c, p, normal(rng, prior.mu_w, prior.rho_w));
        }
    }
    for k in 0..width {
        lp.biases[k] = normal(rng, prior.mu_gamma, prior.rho_gamma);
        lp.precisions[k] = gamma(rng, prior.a, prior.b);
    }
    lp
}

/// Top-down draw of every layer's values; index `0` is the visible layer.
pub fn ancestral_layers<R: Rng + ?Sized>(
    structure: &NetworkStructure,
    layers: &[LayerParameters],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let depth = structure.depth();
    let mut datum: Vec<Vec<f64>> = (0..=depth).map(|m| vec![0.0; structure.width(m)]).collect();
    for m in (0..=depth).rev() {
        for k in 0..structure.width(m) {
            let y = activation_of(structure, layers, &datum, m, k);
            datum[m][k] = sample_unit(rng, y, layers[m].precisions[k]);
        }
    }
    datum
}

/// A fantasy: the visible layer of one ancestral draw.
pub fn ancestral_sample<R: Rng + ?Sized>(
    structure: &NetworkStructure,
    layers: &[LayerParameters],
    rng: &mut R,
) -> Vec<f64> {
    ancestral_layers(structure, layers, rng).swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded;

    #[test]
    fn sigmoid_basics() {
        assert_eq!(sigmoid(0.0), 0.0);
        assert!(sigmoid(20.0) > -1.0 && sigmoid(20.0) < -0.999);
        assert!(sigmoid(-20.0) < 1.0 && sigmoid(-20.0) > 0.999);
        assert_eq!(clamp_state(sigmoid(50.0)), -STATE_LIMIT);
        let x = 1.3;
        assert!((sigmoid(x) - (2.0 / (1.0 + x.exp()) - 1.0)).abs() < 1e-15);
        assert!((sigmoid(sigmoid_inverse(0.5).unwrap()) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(sigmoid_inverse(0.0).unwrap(), 0.0);
        assert!((sigmoid_inverse(0.5).unwrap() - (1.0f64 / 3.0).ln()).abs() < 1e-12);
        assert!(sigmoid_inverse(1.0).is_err());
        assert!(sigmoid_inverse(-1.0).is_err());
        assert!(sigmoid_inverse(f64::NAN).is_err());
    }

    #[test]
    fn density_modes_follow_precision() {
        // Large precision: peaked at the mean.
        let grid: Vec<f64> = (-999..=999).map(|i| i as f64 / 1000.0).collect();
        let mode = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                unit_log_density(*a, 0.0, 1000.0)
                    .unwrap()
                    .total_cmp(&unit_log_density(*b, 0.0, 1000.0).unwrap())
            })
            .unwrap();
        assert!(mode.abs() < 1e-3);
        // Precision below one half: mass piles up near the ends.
        let mid = unit_log_density(0.0, 0.0, 0.1).unwrap();
        assert!(mid < unit_log_density(0.95, 0.0, 0.1).unwrap());
        assert!(mid < unit_log_density(-0.95, 0.0, 0.1).unwrap());
    }

    #[test]
    fn unit_mean_large_precision_is_sigmoid() {
        for y in [-2.0, 0.0, 0.7] {
            assert!((unit_mean(y, 1e8) - sigmoid(y)).abs() < 1e-6);
        }
        assert!(unit_mean(0.0, 0.3).abs() < 1e-12);
    }

    #[test]
    fn adjacency_round_trip() {
        let mut rng = seeded(5);
        let hp = crate::ibp::IbpParams::new(1.5, 1.0).unwrap();
        for _ in 0..20 {
            let s = sample_cibp(5, &[hp], 100, &mut rng).unwrap().structure;
            let back = NetworkStructure::from_adjacency(&s.to_adjacency()).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn adjacency_rejects_out_of_range_edges() {
        assert!(NetworkStructure::from_adjacency("layers 1 widths 2 1\n1 2 0\n").is_err());
        assert!(NetworkStructure::from_adjacency("layers 1 widths 2\n").is_err());
    }
}
