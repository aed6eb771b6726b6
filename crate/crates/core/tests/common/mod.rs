//! Oracles shared by the integration tests: quadrature, chi-squared tests
//! and a report line that bypasses the test harness's output capture.

#![allow(dead_code)]

use std::io::Write;

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete};

/// Composite Simpson rule with `intervals` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // Seed with a fixed subdivision so narrow peaks are not stepped over.
    let pieces = 4096;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Moments of an unnormalized density given by its log on a grid.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
    /// Fourth central moment.
    pub m4: f64,
}

pub fn grid_moments(log_f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> Moments {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| a + i as f64 * h).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| log_f(x)).collect();
    let top = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lf
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            c * (l - top).exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / z;
    let var = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(2) * w).sum::<f64>() / z;
    let m4 = xs.iter().zip(&w).map(|(x, w)| (x - mean).powi(4) * w).sum::<f64>() / z;
    Moments { mean, var, m4 }
}

/// Sample mean and (unbiased) variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn upper_tail(statistic: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(statistic)
}

/// Goodness of fit of `observed` counts to category probabilities `probs`.
/// Adjacent categories are merged left to right until each expects at least
/// five; a short remainder joins the last group.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in observed.iter().zip(probs) {
        o += c as f64;
        e += p * total as f64;
        if e >= 5.0 {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    let statistic = groups.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = groups.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: upper_tail(statistic, dof),
    }
}

/// Two-sample homogeneity test on category counts, merging sparse
/// categories as in [`chi_square_gof`].
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> ChiSquare {
    let len = a.len().max(b.len());
    let get = |v: &[u64], i: usize| v.get(i).copied().unwrap_or(0) as f64;
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut ga, mut gb) = (0.0, 0.0);
    for i in 0..len {
        ga += get(a, i);
        gb += get(b, i);
        let col = ga + gb;
        if col * na.min(nb) / n >= 5.0 {
            groups.push((ga, gb));
            ga = 0.0;
            gb = 0.0;
        }
    }
    if ga + gb > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += ga;
                last.1 += gb;
            }
            None => groups.push((ga, gb)),
        }
    }
    let mut statistic = 0.0;
    for &(ca, cb) in &groups {
        let col = ca + cb;
        let (ea, eb) = (col * na / n, col * nb / n);
        statistic += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
    }
    let dof = groups.len().saturating_sub(1);
    ChiSquare {
        statistic,
        dof,
        p_value: upper_tail(statistic, dof),
    }
}

/// Histogram of small counts with an overflow bin at `cap`.
pub fn histogram(values: impl IntoIterator<Item = usize>, cap: usize) -> Vec<u64> {
    let mut h = vec![0u64; cap + 1];
    for v in values {
        h[v.min(cap)] += 1;
    }
    h
}

/// Writes one result line straight to the process stdout so it shows even
/// when the harness captures test output.
pub fn report(criterion: u32, name: &str, passed: bool, detail: &str) {
    let line = format!(
        "criterion {criterion:>2} [{}] {name}: {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

/// One-sample Kolmogorov-Smirnov test against `cdf`; returns `(D, p)` with
/// the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

/// Exact probability that the width chain started at `k0` has hit zero
/// within `steps` steps, by iterating its transition matrix truncated at a
/// width where the mass is negligible.
pub fn absorption_probability(k0: usize, p: &cibp::IbpParams, steps: usize) -> f64 {
    let kmax = 400;
    let rows: Vec<Vec<f64>> = (0..=kmax)
        .map(|k| {
            if k == 0 {
                let mut r = vec![0.0; kmax + 1];
                r[0] = 1.0;
                return r;
            }
            let pois = statrs::distribution::Poisson::new(cibp::ibp::poisson_rate(k, p).unwrap()).unwrap();
            let mut r: Vec<f64> = (0..=kmax).map(|j| pois.pmf(j as u64)).collect();
            let rest = 1.0 - r.iter().sum::<f64>();
            r[kmax] += rest;
            r
        })
        .collect();
    let mut v = vec![0.0; kmax + 1];
    v[k0] = 1.0;
    for _ in 0..steps {
        let mut next = vec![0.0; kmax + 1];
        for (i, &vi) in v.iter().enumerate() {
            if vi > 0.0 {
                for (j, &pij) in rows[i].iter().enumerate() {
                    next[j] += vi * pij;
                }
            }
        }
        v = next;
    }
    v[0]
}
