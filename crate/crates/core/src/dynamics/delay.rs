use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{parameter, validation, Result};
use crate::measures::stable_sum;

const PROB_TOL: f64 = 1e-12;
const EDGE_TOL: f64 = 1e-12;

/// Distribution of the response delays, supported on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayLaw {
    Degenerate {
        value: f64,
    },
    /// Finitely many atoms. `support` defaults to `[first atom, last atom]`.
    Discrete {
        atoms: Vec<f64>,
        probs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<(f64, f64)>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
}

impl DelayLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            DelayLaw::Degenerate { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(validation(format!("degenerate delay {value} must be finite and nonnegative")));
                }
            }
            DelayLaw::Discrete { atoms, probs, support } => {
                if atoms.is_empty() || atoms.len() != probs.len() {
                    return Err(validation("discrete delay law needs matching nonempty atoms and probs"));
                }
                if atoms.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(validation("delay atoms must be strictly increasing"));
                }
                if atoms.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                    return Err(validation("delay atoms must be finite and nonnegative"));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(validation("delay probabilities must be nonnegative"));
                }
                let s = stable_sum(probs.iter().copied());
                if (s - 1.0).abs() > PROB_TOL {
                    return Err(validation(format!("delay probabilities sum to {s}, expected 1")));
                }
                if let Some((lo, hi)) = support {
                    if !(0.0 <= *lo && lo <= hi) || atoms[0] < *lo || atoms[atoms.len() - 1] > *hi {
                        return Err(validation("delay atoms must lie inside the declared support"));
                    }
                }
            }
            DelayLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && 0.0 <= *low && low < high) {
                    return Err(validation(format!("uniform delay needs 0 <= low < high, got [{low}, {high}]")));
                }
            }
        }
        Ok(())
    }

    /// `(a, b)`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DelayLaw::Degenerate { value } => (*value, *value),
            DelayLaw::Discrete { atoms, support, .. } => {
                support.unwrap_or((atoms[0], atoms[atoms.len() - 1]))
            }
            DelayLaw::Uniform { low, high } => (*low, *high),
        }
    }

    /// `P(Δ ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DelayLaw::Degenerate { value } => f64::from(x >= *value),
            DelayLaw::Discrete { atoms, probs, .. } => {
                stable_sum(atoms.iter().zip(probs).filter(|(a, _)| **a <= x).map(|(_, p)| *p))
            }
            DelayLaw::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
        }
    }

    /// `P(lo ≤ Δ < hi)`, or `P(lo ≤ Δ ≤ hi)` when `closed` is set.
    pub fn mass(&self, lo: f64, hi: f64, closed: bool) -> f64 {
        let inside = |x: f64| x >= lo - EDGE_TOL && (x < hi - EDGE_TOL || (closed && x <= hi + EDGE_TOL));
        match self {
            DelayLaw::Degenerate { value } => f64::from(inside(*value)),
            DelayLaw::Discrete { atoms, probs, .. } => {
                stable_sum(atoms.iter().zip(probs).filter(|(a, _)| inside(**a)).map(|(_, p)| *p))
            }
            DelayLaw::Uniform { .. } => self.cdf(hi) - self.cdf(lo),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DelayLaw::Degenerate { value } => *value,
            DelayLaw::Discrete { atoms, probs, .. } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *a;
                    }
                }
                // Rounding left u beyond the accumulated mass; take the last charged atom.
                let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(atoms.len() - 1);
                atoms[last]
            }
            DelayLaw::Uniform { low, high } => rng.random_range(*low..=*high),
        }
    }

    /// `n` i.i.d. draws from one generator.
    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// Uniform level-`n` partition of `[a, b]` with left endpoints as atoms and
    /// the law's mass on each cell as weights. Empty cells are dropped.
    pub fn partition(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        if n == 0 {
            return Err(parameter("partition level must be at least 1"));
        }
        self.validate()?;
        let (a, b) = self.support();
        if b - a <= 0.0 {
            return Ok(vec![(a, 1.0)]);
        }
        let width = (b - a) / n as f64;
        let out: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let lo = a + k as f64 * width;
                let hi = if k + 1 == n { b } else { a + (k + 1) as f64 * width };
                (lo, self.mass(lo, hi, k + 1 == n))
            })
            .filter(|(_, w)| *w > 0.0)
            .collect();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn validation() {
        assert!(DelayLaw::Degenerate { value: -1.0 }.validate().is_err());
        assert!(DelayLaw::Uniform { low: 0.2, high: 0.1 }.validate().is_err());
        let bad = DelayLaw::Discrete { atoms: vec![0.1, 0.3], probs: vec![0.5, 0.6], support: None };
        assert!(bad.validate().is_err());
        let unsorted = DelayLaw::Discrete { atoms: vec![0.3, 0.1], probs: vec![0.5, 0.5], support: None };
        assert!(unsorted.validate().is_err());
    }

    #[test]
    fn sampling_examples() {
        let mut rng = rng_from(8);
        assert!(DelayLaw::Degenerate { value: 0.2 }.sample_n(50, &mut rng).iter().all(|d| *d == 0.2));

        let law = DelayLaw::Discrete { atoms: vec![0.1, 0.3], probs: vec![0.5, 0.5], support: None };
        let draws = law.sample_n(10_000, &mut rng);
        let freq = draws.iter().filter(|d| **d == 0.1).count() as f64 / 1e4;
        assert!((freq - 0.5).abs() < 0.02, "{freq}");

        let (a, b) = (0.1, 0.5);
        let u = DelayLaw::Uniform { low: a, high: b };
        let draws = u.sample_n(10_000, &mut rng);
        let mean = draws.iter().sum::<f64>() / 1e4;
        assert!((mean - (a + b) / 2.0).abs() < 3.0 * (b - a) / (12.0f64 * 1e4).sqrt());
        assert!(draws.iter().all(|d| (a..=b).contains(d)));
    }

    #[test]
    fn kolmogorov_smirnov_smoke() {
        let u = DelayLaw::Uniform { low: 0.0, high: 2.0 };
        let mut draws = u.sample_n(10_000, &mut rng_from(9));
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        let ks = draws
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let f = u.cdf(*x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.63 / n.sqrt(), "{ks}");
    }

    #[test]
    fn partitions() {
        assert_eq!(DelayLaw::Degenerate { value: 0.3 }.partition(7).unwrap(), vec![(0.3, 1.0)]);
        let u = DelayLaw::Uniform { low: 0.0, high: 1.0 }.partition(4).unwrap();
        let atoms: Vec<f64> = u.iter().map(|p| p.0).collect();
        assert_eq!(atoms, vec![0.0, 0.25, 0.5, 0.75]);
        assert!(u.iter().all(|p| (p.1 - 0.25).abs() < 1e-15));
        let d = DelayLaw::Discrete { atoms: vec![0.0, 0.5], probs: vec![0.3, 0.7], support: Some((0.0, 1.0)) };
        assert_eq!(d.partition(2).unwrap(), vec![(0.0, 0.3), (0.5, 0.7)]);
        let total: f64 = d.partition(10).unwrap().iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(d.partition(0).is_err());
    }
}
