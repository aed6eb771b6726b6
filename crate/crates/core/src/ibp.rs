//! The two-parameter Indian buffet process and its cascading extension.
//!
//! A cascade starts with `K0` customers (the visible units). The dishes they
//! taste become the customers of the next restaurant, and so on until some
//! restaurant serves no dishes. The number of dishes at each depth forms a
//! Markov chain whose transition law is Poisson with mean
//! [`poisson_rate`]; the width `0` is absorbing.

use std::collections::HashMap;

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::network::NetworkStructure;
use crate::random::poisson;

/// Default guard against runaway recursions.
pub const DEFAULT_DEPTH_CAP: usize = 1000;

/// Parameters of a two-parameter IBP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbpParams {
    /// Expected number of dishes per customer.
    pub alpha: f64,
    /// Sparsity (repulsion) parameter.
    pub beta: f64,
}

impl IbpParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::param("beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// Rate of brand-new dishes for the `j`-th customer (1-indexed).
    #[inline]
    pub fn new_dish_rate(&self, j: usize) -> f64 {
        self.alpha * self.beta / (j as f64 + self.beta - 1.0)
    }
}

/// `sum_{k=1}^{K} beta / (k + beta - 1)`, summed directly.
pub fn beta_harmonic(k: usize, beta: f64) -> f64 {
    (1..=k).map(|i| beta / (i as f64 + beta - 1.0)).sum()
}

/// Mean number of nonzero columns produced by `k` customers.
pub fn poisson_rate(k: usize, params: &IbpParams) -> Result<f64> {
    params.validate()?;
    Ok(params.alpha * beta_harmonic(k, params.beta))
}

/// Expected change of the width under one step of the width chain, using the
/// identity Lyapunov function.
pub fn drift(k: usize, params: &IbpParams) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("K", "drift is undefined at the absorbing width 0"));
    }
    Ok(poisson_rate(k, params)? - k as f64)
}

/// Expected number of children of a dish when `k` customers are seated.
pub fn expected_out_degree(k: usize, beta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("K", "need at least one customer"));
    }
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    Ok(k as f64 / beta_harmonic(k, beta))
}

/// Binary customer-by-dish matrix. Entry `(child, parent)` is set when the
/// parent unit (dish) has an edge into the child unit (customer).
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMatrix {
    bits: Dense<bool>,
}

impl EdgeMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            bits: Dense::new(rows, cols),
        }
    }

    pub fn from_entries(rows: usize, cols: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut m = Self::new(rows, cols);
        for &(c, p) in entries {
            if c >= rows || p >= cols {
                return Err(Error::Inconsistent(format!(
                    "edge ({c}, {p}) outside a {rows}x{cols} matrix"
                )));
            }
            m.set(c, p, true);
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.bits.rows()
    }

    /// Stored column count. Equal to [`active_columns`](Self::active_columns)
    /// whenever the owning structure has been pruned.
    #[inline]
    pub fn cols(&self) -> usize {
        self.bits.cols()
    }

    #[inline]
    pub fn get(&self, child: usize, parent: usize) -> bool {
        self.bits.get(child, parent)
    }

    #[inline]
    pub fn set(&mut self, child: usize, parent: usize, on: bool) {
        self.bits.set(child, parent, on)
    }

    pub fn column_sum(&self, parent: usize) -> usize {
        self.bits.column(parent).filter(|&b| b).count()
    }

    /// Number of customers other than `child` tasting `parent`.
    pub fn column_sum_excluding(&self, parent: usize, child: usize) -> usize {
        self.column_sum(parent) - usize::from(self.get(child, parent))
    }

    pub fn row_sum(&self, child: usize) -> usize {
        self.bits.row(child).iter().filter(|&&b| b).count()
    }

    pub fn parents_of(&self, child: usize) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .row(child)
            .iter()
            .enumerate()
            .filter_map(|(p, &b)| b.then_some(p))
    }

    pub fn children_of(&self, parent: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows()).filter(move |&c| self.get(c, parent))
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows()).flat_map(move |c| self.parents_of(c).map(move |p| (c, p)))
    }

    pub fn edge_count(&self) -> usize {
        self.bits.as_slice().iter().filter(|&&b| b).count()
    }

    pub fn active_columns(&self) -> usize {
        (0..self.cols()).filter(|&p| self.column_sum(p) > 0).count()
    }

    pub(crate) fn push_row(&mut self) {
        self.bits.push_row();
    }

    pub(crate) fn push_col(&mut self) {
        self.bits.push_col();
    }

    pub(crate) fn remove_row(&mut self, r: usize) {
        self.bits.remove_row(r);
    }

    pub(crate) fn remove_col(&mut self, c: usize) {
        self.bits.remove_col(c);
    }

    pub(crate) fn permute_rows(&mut self, order: &[usize]) {
        self.bits.permute_rows(order);
    }

    pub(crate) fn permute_cols(&mut self, order: &[usize]) {
        self.bits.permute_cols(order);
    }

    /// Column permutation putting the matrix in left-ordered form: columns
    /// sorted by their binary history read top to bottom, largest first.
    pub fn left_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cols()).collect();
        order.sort_by(|&a, &b| {
            let ha = self.bits.column(a);
            let hb = self.bits.column(b);
            hb.cmp(ha)
        });
        order
    }

    pub fn left_ordered(&self) -> Self {
        let mut m = self.clone();
        m.permute_cols(&self.left_order());
        m
    }

    /// Log probability of the left-ordered equivalence class of this matrix
    /// under a two-parameter IBP with `rows` customers. Empty columns are
    /// ignored.
    pub fn ibp_log_prob(&self, params: &IbpParams) -> f64 {
        let n = self.rows();
        let (alpha, beta) = (params.alpha, params.beta);
        let mut histories: HashMap<Vec<bool>, usize> = HashMap::new();
        let mut lp = -alpha * beta_harmonic(n, beta);
        let mut active = 0usize;
        for p in 0..self.cols() {
            let m = self.column_sum(p);
            if m == 0 {
                continue;
            }
            active += 1;
            *histories.entry(self.bits.column(p).collect()).or_default() += 1;
            lp += ln_gamma(m as f64) + ln_gamma((n - m) as f64 + beta) - ln_gamma(n as f64 + beta);
        }
        lp += active as f64 * (alpha * beta).ln();
        for &count in histories.values() {
            lp -= ln_gamma(count as f64 + 1.0);
        }
        lp
    }
}

/// Draws a `customers`-row matrix from the restaurant process. Columns come
/// out in discovery order: first by the customer who first tasted them, then
/// by the order that customer discovered them.
pub fn sample_ibp<R: Rng + ?Sized>(customers: usize, params: &IbpParams, rng: &mut R) -> Result<EdgeMatrix> {
    params.validate()?;
    if customers == 0 {
        return Err(Error::param("customers", "need at least one customer"));
    }
    let mut tasters: Vec<usize> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(customers);
    for j in 1..=customers {
        let denom = j as f64 + params.beta - 1.0;
        let mut row = Vec::new();
        for (dish, eta) in tasters.iter_mut().enumerate() {
            if rng.random::<f64>() < *eta as f64 / denom {
                *eta += 1;
                row.push(dish);
            }
        }
        let fresh = poisson(rng, params.new_dish_rate(j));
        for _ in 0..fresh {
            row.push(tasters.len());
            tasters.push(1);
        }
        rows.push(row);
    }
    let mut m = EdgeMatrix::new(customers, tasters.len());
    for (c, row) in rows.iter().enumerate() {
        for &p in row {
            m.set(c, p, true);
        }
    }
    Ok(m)
}

/// Outcome of a cascade draw.
#[derive(Debug, Clone)]
pub struct CibpSample {
    pub structure: NetworkStructure,
    /// The depth cap was hit before a restaurant served no dishes.
    pub truncated: bool,
}

impl CibpSample {
    pub fn depth(&self) -> usize {
        self.structure.depth()
    }

    /// Fails with [`Error::Truncated`] rather than handing back a capped draw.
    pub fn into_complete(self, cap: usize) -> Result<NetworkStructure> {
        if self.truncated {
            let width = self.structure.widths().last().copied().unwrap_or(0);
            return Err(Error::Truncated { cap, width });
        }
        Ok(self.structure)
    }
}

fn params_at(hypers: &[IbpParams], depth: usize) -> &IbpParams {
    &hypers[depth.min(hypers.len() - 1)]
}

/// Runs the cascade from `visible` customers. `hypers[m]` drives the
/// restaurant whose customers are the units of layer `m`; the last entry is
/// reused for deeper restaurants.
pub fn sample_cibp<R: Rng + ?Sized>(
    visible: usize,
    hypers: &[IbpParams],
    depth_cap: usize,
    rng: &mut R,
) -> Result<CibpSample> {
    if visible == 0 {
        return Err(Error::param("visible", "need at least one visible unit"));
    }
    if depth_cap == 0 {
        return Err(Error::param("depth_cap", "must be at least 1"));
    }
    if hypers.is_empty() {
        return Err(Error::param("hypers", "need at least one IBP parameter set"));
    }
    for h in hypers {
        h.validate()?;
    }
    let mut matrices = Vec::new();
    let mut customers = visible;
    let mut truncated = false;
    loop {
        if matrices.len() == depth_cap {
            truncated = true;
            break;
        }
        let z = sample_ibp(customers, params_at(hypers, matrices.len()), rng)?;
        let width = z.cols();
        if width == 0 {
            break;
        }
        matrices.push(z);
        customers = width;
    }
    Ok(CibpSample {
        structure: NetworkStructure::from_matrices(visible, matrices)?,
        truncated,
    })
}

/// Realized path of the width chain.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthTrace {
    pub widths: Vec<usize>,
    pub absorbed: bool,
}

/// Simulates the width chain directly from its Poisson transition law.
pub fn simulate_width_chain<R: Rng + ?Sized>(
    k0: usize,
    params: &IbpParams,
    max_steps: usize,
    rng: &mut R,
) -> Result<WidthTrace> {
    params.validate()?;
    let mut widths = vec![k0];
    let mut k = k0;
    for _ in 0..max_steps {
        if k == 0 {
            break;
        }
        k = poisson(rng, poisson_rate(k, params)?);
        widths.push(k);
    }
    Ok(WidthTrace {
        absorbed: k == 0,
        widths,
    })
}
