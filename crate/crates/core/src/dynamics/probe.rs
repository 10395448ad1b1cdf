use rand::Rng;

use super::coefficients::{eval_terms, Args, CoefficientRole, CoefficientSet};
use super::features::{FeatureNeeds, Features};
use crate::error::{parameter, Result};
use crate::measures::{w2_exact_lp, DiscreteMeasure};
use crate::seed::rng_from;

/// Which arguments a probe trial perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    State,
    Measure,
    Control,
    Delayed,
    Joint,
}

const SLOTS: [Slot; 5] = [Slot::State, Slot::Measure, Slot::Control, Slot::Delayed, Slot::Joint];

fn random_vec<R: Rng>(rng: &mut R, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..=r)).collect()
}

fn random_measure<R: Rng>(rng: &mut R, dim: usize, r: f64) -> DiscreteMeasure {
    let m = rng.random_range(1..=4);
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let head: f64 = w[..m - 1].iter().sum();
    w[m - 1] = 1.0 - head;
    DiscreteMeasure::new(dim, random_vec(rng, m * dim, r), w).expect("valid random measure")
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Largest observed ratio `|Δ coefficient| / (|Δx| + W₂(z, z') + |Δv| + |Δx₀(t-δ)|)`
/// over `trials` random argument pairs with coordinates in `[-radius, radius]`.
///
/// Trials cycle through perturbing one argument at a time, then all of them
/// at once. Measures
/// have between one and four atoms and W₂ is computed with the exact LP.
pub fn lipschitz_probe(
    coefficients: &CoefficientSet,
    role: CoefficientRole,
    n0: usize,
    n1: usize,
    trials: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(parameter("lipschitz_probe needs at least one trial"));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(parameter(format!("probe radius must be positive, got {radius}")));
    }
    let terms = coefficients.terms(role);
    let leader = role.is_leader();
    let n_out = if leader { n0 } else { n1 };
    let nd = if leader { 0 } else { n0 };
    let mut rng = rng_from(seed);
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let slot = SLOTS[trial % SLOTS.len()];
        if leader && slot == Slot::Delayed {
            continue;
        }
        let x = random_vec(&mut rng, n_out, radius);
        let v = random_vec(&mut rng, n_out, radius);
        let d = random_vec(&mut rng, nd, radius);
        let z = random_measure(&mut rng, n1, radius);
        let fresh = |rng: &mut _, base: &Vec<f64>, on: bool, n| if on { random_vec(rng, n, radius) } else { base.clone() };
        let x2 = fresh(&mut rng, &x, matches!(slot, Slot::State | Slot::Joint), n_out);
        let v2 = fresh(&mut rng, &v, matches!(slot, Slot::Control | Slot::Joint), n_out);
        let d2 = fresh(&mut rng, &d, matches!(slot, Slot::Delayed | Slot::Joint), nd);
        let z2 = if matches!(slot, Slot::Measure | Slot::Joint) {
            random_measure(&mut rng, n1, radius)
        } else {
            z.clone()
        };
        let w2 = if z2 == z { 0.0 } else { w2_exact_lp(&z, &z2)?.0 };
        let denom = dist(&x, &x2) + w2 + dist(&v, &v2) + dist(&d, &d2);
        if denom == 0.0 {
            continue;
        }
        let (f1, f2) = (Features::of_measure(&z, FeatureNeeds::all()), Features::of_measure(&z2, FeatureNeeds::all()));
        let a1 = Args { x: &x, v: &v, delayed: &d, feats: &f1, delta: 0.0, t: 0.0 };
        let a2 = Args { x: &x2, v: &v2, delayed: &d2, feats: &f2, delta: 0.0, t: 0.0 };
        let diff = (0..n_out)
            .map(|k| (eval_terms(terms, &a1, k) - eval_terms(terms, &a2, k)).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / denom);
    }
    Ok(worst)
}
