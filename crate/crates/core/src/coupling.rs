//! Explicit couplings between finite mixtures that share their components.
//!
//! For `Σ p_k μ_k` and `Σ q_k μ_k`, [`build_pihat`] constructs a feasible
//! coupling of the index distributions `p` and `q` that keeps as much mass
//! as possible on the diagonal. Composing it with optimal plans between the
//! components yields a transport plan between the mixtures, which is what
//! [`mixture_w2_upper_bound`] evaluates.

use std::collections::BTreeMap;

use crate::error::{dimension, validation, Result};
use crate::measures::{mixture, stable_sum, w2_exact_lp, DiscreteMeasure};

const PROB_TOL: f64 = 1e-10;

/// A coupling `pihat` of two probability vectors with maximal diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCoupling {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Row-major `n × n`.
    pub pihat: Vec<Vec<f64>>,
}

impl MixtureCoupling {
    pub fn n(&self) -> usize {
        self.p.len()
    }

    /// Largest violation of the row and column marginal equations.
    pub fn marginal_error(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for h in 0..n {
            let row = stable_sum(self.pihat[h].iter().copied());
            worst = worst.max((row - self.p[h]).abs());
            let col = stable_sum((0..n).map(|l| self.pihat[l][h]));
            worst = worst.max((col - self.q[h]).abs());
        }
        worst
    }

    /// Sum of the diagonal entries.
    pub fn diagonal_mass(&self) -> f64 {
        stable_sum((0..self.n()).map(|h| self.pihat[h][h]))
    }
}

fn check_probability(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(validation(format!("{name} is empty")));
    }
    if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(validation(format!("{name} has entry {x}, expected a nonnegative probability")));
    }
    let s = stable_sum(v.iter().copied());
    if (s - 1.0).abs() > PROB_TOL {
        return Err(validation(format!("{name} sums to {s}, expected 1")));
    }
    Ok(())
}

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    check_probability("p", p)?;
    check_probability("q", q)?;
    if p.len() != q.len() {
        return Err(dimension(format!(
            "probability vectors have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Builds the coupling with diagonal `min(p_h, q_h)`.
///
/// With `A = {h : p_h ≤ q_h}`, the excess `p_h − q_h` of each `h ∉ A` is
/// spread over the deficits `q_l − p_l`, `l ∈ A`, in proportion to their size:
/// `pihat[h][l] = (p_h − q_h)(q_l − p_l) / Σ_{k∉A}(p_k − q_k)`.
/// When `p = q` the complement of `A` is empty and the coupling is diagonal.
pub fn build_pihat(p: &[f64], q: &[f64]) -> Result<MixtureCoupling> {
    check_pair(p, q)?;
    let n = p.len();
    let in_a: Vec<bool> = p.iter().zip(q).map(|(a, b)| a <= b).collect();
    let excess = stable_sum((0..n).filter(|&k| !in_a[k]).map(|k| p[k] - q[k]));
    let mut pihat = vec![vec![0.0; n]; n];
    for h in 0..n {
        pihat[h][h] = p[h].min(q[h]);
    }
    if excess > 0.0 {
        for h in (0..n).filter(|&h| !in_a[h]) {
            for l in (0..n).filter(|&l| in_a[l]) {
                pihat[h][l] = (p[h] - q[h]) * (q[l] - p[l]) / excess;
            }
        }
    }
    Ok(MixtureCoupling {
        p: p.to_vec(),
        q: q.to_vec(),
        pihat,
    })
}

/// `Σ_{h,l} pihat_{hl} D_{hl}` for a symmetric matrix of squared component
/// distances `D_{hl} = W₂²(μ_h, μ_l)` with zero diagonal.
pub fn mixture_w2_upper_bound(coupling: &MixtureCoupling, pairwise_w2sq: &[Vec<f64>]) -> Result<f64> {
    let n = coupling.n();
    if pairwise_w2sq.len() != n || pairwise_w2sq.iter().any(|r| r.len() != n) {
        return Err(dimension(format!("distance matrix must be {n} × {n}")));
    }
    for h in 0..n {
        for l in 0..n {
            let d = pairwise_w2sq[h][l];
            if !(d.is_finite() && d >= 0.0) {
                return Err(validation(format!("entry ({h}, {l}) = {d} is negative or not finite")));
            }
            let e = pairwise_w2sq[l][h];
            if (d - e).abs() > 1e-12 * (1.0 + d.abs().max(e.abs())) {
                return Err(validation(format!("distance matrix is not symmetric at ({h}, {l})")));
            }
        }
        if pairwise_w2sq[h][h] != 0.0 {
            return Err(validation(format!("diagonal entry {h} is nonzero")));
        }
    }
    Ok(stable_sum((0..n).flat_map(|h| {
        (0..n).map(move |l| coupling.pihat[h][l] * pairwise_w2sq[h][l])
    })))
}

/// Evaluates both sides of the mixture convexity inequality
/// `W₂²(Σλ_k μ_k, Σλ_k ν_k) ≤ Σλ_k W₂²(μ_k, ν_k)` with the exact LP.
/// Returns `(lhs, rhs)`.
pub fn verify_mixture_convexity(
    mus: &[DiscreteMeasure],
    nus: &[DiscreteMeasure],
    lambdas: &[f64],
) -> Result<(f64, f64)> {
    if mus.len() != nus.len() {
        return Err(dimension(format!(
            "{} source components but {} target components",
            mus.len(),
            nus.len()
        )));
    }
    let left = mixture(mus, lambdas)?;
    let right = mixture(nus, lambdas)?;
    let (w, _) = w2_exact_lp(&left, &right)?;
    let mut terms = Vec::with_capacity(mus.len());
    for ((m, n), &l) in mus.iter().zip(nus).zip(lambdas) {
        let (d, _) = w2_exact_lp(m, n)?;
        terms.push(l * d * d);
    }
    Ok((w * w, stable_sum(terms)))
}

/// Half the ℓ¹ distance between two probability vectors.
pub fn tv_half(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(0.5 * stable_sum(p.iter().zip(q).map(|(a, b)| (a - b).abs())))
}

/// A finite product probability space of independent uniform digits, used to
/// compute regular conditional distributions exactly by enumeration.
#[derive(Debug, Clone)]
pub struct FiniteProductSpace {
    cards: Vec<usize>,
}

/// An exact conditional law: value → (count, total).
pub type ExactLaw = BTreeMap<i64, (u64, u64)>;

impl FiniteProductSpace {
    pub fn new(cards: Vec<usize>) -> Result<Self> {
        if cards.is_empty() || cards.iter().any(|&c| c == 0) {
            return Err(validation("every digit needs at least one state"));
        }
        Ok(Self { cards })
    }

    pub fn outcomes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &c in &self.cards {
            out = out
                .into_iter()
                .flat_map(|o| {
                    (0..c).map(move |d| {
                        let mut v = o.clone();
                        v.push(d);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Law of `x` given the σ-algebra generated by the digits in `given`,
    /// evaluated at outcome `omega`.
    pub fn conditional_law(
        &self,
        given: &[usize],
        omega: &[usize],
        x: &dyn Fn(&[usize]) -> i64,
    ) -> ExactLaw {
        let mut law: ExactLaw = BTreeMap::new();
        let mut total = 0u64;
        for o in self.outcomes() {
            if given.iter().all(|&g| o[g] == omega[g]) {
                law.entry(x(&o)).or_insert((0, 0)).0 += 1;
                total += 1;
            }
        }
        law.values_mut().for_each(|v| v.1 = total);
        law
    }
}

/// True when two exact laws assign the same rational mass to every value.
pub fn laws_equal(a: &ExactLaw, b: &ExactLaw) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|((ka, (na, da)), (kb, (nb, db)))| {
            ka == kb && (*na as u128) * (*db as u128) == (*nb as u128) * (*da as u128)
        })
}
