//! Finitely supported probability measures and exact quadratic
//! Wasserstein distances between them.
//!
//! Three exact solvers sit behind the public functions:
//!
//! | path | used for | method |
//! |------|----------|--------|
//! | [`w2_exact_1d`] | one-dimensional measures | monotone (quantile) coupling |
//! | [`w2_exact_lp`] | general supports up to a cap | network simplex |
//! | [`w2_squared_uniform`] | equal-size uniform clouds | linear assignment |
//!
//! No entropic smoothing is used anywhere; all three return the optimum of
//! the transport linear program up to floating-point rounding.

mod assignment;
mod network_simplex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dimension, parameter, validation, Error, Result};

/// Default cap on the support size accepted by the network-simplex path.
pub const DEFAULT_SUPPORT_CAP: usize = 512;

const WEIGHT_TOL: f64 = 1e-12;

/// A weighted point cloud in `R^dim`. Duplicate points are kept as separate atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Compensated (Neumaier) summation.
pub(crate) fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl DiscreteMeasure {
    /// Builds a measure from flat row-major `points` (`weights.len()` rows of `dim` coordinates).
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(dimension("point dimension must be at least 1"));
        }
        if weights.is_empty() {
            return Err(validation("measure must have at least one atom"));
        }
        if points.len() != dim * weights.len() {
            return Err(dimension(format!(
                "{} coordinates cannot form {} points of dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if let Some(bad) = points.iter().position(|x| !x.is_finite()) {
            return Err(validation(format!(
                "coordinate {} of atom {} is not finite",
                bad % dim,
                bad / dim
            )));
        }
        if let Some(bad) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(validation(format!(
                "weight {bad} is {} (must be finite and nonnegative)",
                weights[bad]
            )));
        }
        let total = stable_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(validation(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            dim,
            points,
            weights,
        })
    }

    /// Builds a measure from a list of points and matching weights.
    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(dimension("points have inconsistent dimensions"));
        }
        Self::new(dim, points.concat(), weights)
    }

    /// Uniform weights `1/n` on the rows of `points` (flat, row-major).
    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(validation("uniform measure needs a nonempty set of points"));
        }
        let n = points.len() / dim;
        Self::new(dim, points, vec![1.0 / n as f64; n])
    }

    /// The unit point mass at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(x.len(), x.to_vec(), vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms (duplicates counted separately).
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points
            .chunks_exact(self.dim)
            .zip(self.weights.iter().copied())
    }

    /// Mean vector `∫ y dμ`.
    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|k| stable_sum(self.iter().map(|(p, w)| w * p[k])))
            .collect()
    }

    /// Random subsample of at most `max_atoms` atoms, drawn without
    /// replacement, with the selected weights renormalised.
    pub fn subsample<R: Rng + ?Sized>(&self, max_atoms: usize, rng: &mut R) -> Result<Self> {
        if max_atoms == 0 {
            return Err(parameter("subsample size must be positive"));
        }
        if self.len() <= max_atoms {
            return Ok(self.clone());
        }
        let mut idx = rand::seq::index::sample(rng, self.len(), max_atoms).into_vec();
        idx.sort_unstable();
        let mut points = Vec::with_capacity(max_atoms * self.dim);
        let mut weights = Vec::with_capacity(max_atoms);
        for &i in &idx {
            points.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        let total = stable_sum(weights.iter().copied());
        if total <= 0.0 {
            // Every selected atom had zero mass; fall back to uniform weights.
            weights.iter_mut().for_each(|w| *w = 1.0 / max_atoms as f64);
        } else {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        Self::new(self.dim, points, weights)
    }
}

/// A coupling between two discrete measures, stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub row_measure: DiscreteMeasure,
    pub col_measure: DiscreteMeasure,
    entries: Vec<(usize, usize, f64)>,
}

impl TransportPlan {
    /// Nonzero entries `(row, col, mass)`.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .filter(|&&(r, c, _)| r == i && c == j)
            .map(|e| e.2)
            .sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.col_measure.len()]; self.row_measure.len()];
        for &(i, j, w) in &self.entries {
            m[i][j] += w;
        }
        m
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.row_measure.len()];
        for &(i, _, w) in &self.entries {
            s[i] += w;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.col_measure.len()];
        for &(_, j, w) in &self.entries {
            s[j] += w;
        }
        s
    }

    /// `Σ γ_ij |x_i − y_j|²`.
    pub fn cost(&self) -> f64 {
        stable_sum(self.entries.iter().map(|&(i, j, w)| {
            w * sq_dist(self.row_measure.point(i), self.col_measure.point(j))
        }))
    }

    /// Largest marginal violation over rows and columns.
    pub fn marginal_error(&self) -> f64 {
        let rows = self
            .row_sums()
            .iter()
            .zip(self.row_measure.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let cols = self
            .col_sums()
            .iter()
            .zip(self.col_measure.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn same_dim(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<usize> {
    if mu.dim != nu.dim {
        return Err(dimension(format!(
            "measures live in R^{} and R^{}",
            mu.dim, nu.dim
        )));
    }
    Ok(mu.dim)
}

/// Squared W₂ between one-dimensional measures via the monotone coupling.
pub fn w2_squared_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(dimension(format!(
            "w2_exact_1d needs one-dimensional measures, got R^{} and R^{}",
            mu.dim, nu.dim
        )));
    }
    let mut a: Vec<(f64, f64)> = mu.points.iter().copied().zip(mu.weights.iter().copied()).collect();
    let mut b: Vec<(f64, f64)> = nu.points.iter().copied().zip(nu.weights.iter().copied()).collect();
    a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    Ok(sorted_quantile_cost(&a, &b))
}

/// Monotone-coupling cost for already sorted `(position, weight)` lists.
pub(crate) fn sorted_quantile_cost(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut total = 0.0f64;
    let mut comp = 0.0f64;
    loop {
        let m = ra.min(rb);
        let d = a[i].0 - b[j].0;
        let term = m * d * d;
        let t = total + term;
        comp += (total - t) + term;
        total = t;
        ra -= m;
        rb -= m;
        // The smaller remainder hits zero exactly; leftovers of order 1e-16
        // after the last atom are rounding in the weight totals.
        let adv_a = ra <= 0.0;
        let adv_b = rb <= 0.0;
        if adv_a {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if adv_b {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    (total + comp).max(0.0)
}

/// W₂ between one-dimensional measures. Exact: the monotone coupling is optimal on the line.
pub fn w2_exact_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    w2_squared_1d(mu, nu).map(f64::sqrt)
}

/// Options for the network-simplex path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LpOptions {
    pub support_cap: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            support_cap: DEFAULT_SUPPORT_CAP,
        }
    }
}

/// W₂ and an optimal plan from the exact transportation LP, with the default support cap.
pub fn w2_exact_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    w2_exact_lp_with(mu, nu, LpOptions::default())
}

pub fn w2_exact_lp_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    opts: LpOptions,
) -> Result<(f64, TransportPlan)> {
    same_dim(mu, nu)?;
    for m in [mu, nu] {
        if m.len() > opts.support_cap {
            return Err(Error::Capacity {
                size: m.len(),
                cap: opts.support_cap,
            });
        }
    }
    let costs: Vec<f64> = mu
        .points
        .chunks_exact(mu.dim)
        .flat_map(|x| nu.points.chunks_exact(nu.dim).map(move |y| sq_dist(x, y)))
        .collect();
    let sol = network_simplex::solve(&mu.weights, &nu.weights, &costs);
    let lp_cost = sol.cost;
    let plan = TransportPlan {
        row_measure: mu.clone(),
        col_measure: nu.clone(),
        entries: sol.flows,
    };
    let cost = plan.cost().max(0.0);
    debug_assert!((cost - lp_cost).abs() <= 1e-9 * (1.0 + cost));
    Ok((cost.sqrt(), plan))
}

/// Squared W₂ between two uniform clouds with the same number of points
/// (flat row-major arrays), solved as an assignment problem.
pub fn w2_squared_uniform(dim: usize, a: &[f64], b: &[f64]) -> Result<f64> {
    if dim == 0 || a.len() != b.len() || a.is_empty() || a.len() % dim != 0 {
        return Err(dimension("assignment path needs two equal-size nonempty clouds"));
    }
    if let Some(x) = a.iter().chain(b).find(|x| !x.is_finite()) {
        return Err(validation(format!("non-finite coordinate {x}")));
    }
    let n = a.len() / dim;
    let (total, _) = assignment::solve_points(dim, a, b);
    Ok(total / n as f64)
}

/// Squared W₂ by the cheapest exact route: the quantile coupling on the
/// line, the LP (subject to the default cap) otherwise.
pub fn w2_squared(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    let dim = same_dim(mu, nu)?;
    if dim == 1 {
        w2_squared_1d(mu, nu)
    } else {
        let (w, _) = w2_exact_lp(mu, nu)?;
        Ok(w * w)
    }
}

/// `M_q(μ) = (Σ w_i |x_i|^q)^{1/q}`.
pub fn moment(mu: &DiscreteMeasure, q: f64) -> Result<f64> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(parameter(format!("moment order q = {q} must be a finite real ≥ 1")));
    }
    let s = stable_sum(mu.iter().map(|(p, w)| {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        w * norm.powf(q)
    }));
    Ok(s.powf(1.0 / q))
}

/// `(1/N) Σ δ_{X_k}` over the given samples; duplicates are not merged.
pub fn empirical_from_samples(samples: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    if samples.is_empty() {
        return Err(validation("cannot build an empirical measure from zero samples"));
    }
    let n = samples.len();
    DiscreteMeasure::from_points(samples, vec![1.0 / n as f64; n])
}

/// `Σ_k λ_k μ_k` with concatenated supports.
pub fn mixture(components: &[DiscreteMeasure], lambdas: &[f64]) -> Result<DiscreteMeasure> {
    if components.is_empty() || components.len() != lambdas.len() {
        return Err(validation(format!(
            "mixture needs matching nonempty lists ({} components, {} weights)",
            components.len(),
            lambdas.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(validation(format!("mixture weight {l} is negative or not finite")));
    }
    let total = stable_sum(lambdas.iter().copied());
    if (total - 1.0).abs() > 1e-10 {
        return Err(validation(format!("mixture weights sum to {total}, expected 1")));
    }
    let dim = components[0].dim;
    if components.iter().any(|c| c.dim != dim) {
        return Err(dimension("mixture components have different dimensions"));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (c, &l) in components.iter().zip(lambdas) {
        points.extend_from_slice(&c.points);
        weights.extend(c.weights.iter().map(|w| w * l / total));
    }
    DiscreteMeasure::new(dim, points, weights)
}

/// Expected-W₂² rate of the empirical measure in dimension `n1`:
/// `N^{-1/2}` below four dimensions, `N^{-1/2} ln N` in four, `N^{-2/n1}` above.
pub fn rate_f(n1: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(parameter(format!("rate_f needs N ≥ 2, got {n}")));
    }
    rate_f_real(n1, n as f64)
}

/// [`rate_f`] evaluated at a real argument `n ≥ 2`.
pub fn rate_f_real(n1: usize, n: f64) -> Result<f64> {
    if n1 == 0 {
        return Err(parameter("dimension n1 must be at least 1"));
    }
    if !(n >= 2.0) {
        return Err(parameter(format!("rate_f needs N ≥ 2, got {n}")));
    }
    Ok(match n1 {
        1..=3 => n.powf(-0.5),
        4 => n.powf(-0.5) * n.ln(),
        _ => n.powf(-2.0 / n1 as f64),
    })
}

#[cfg(test)]
mod tests;
