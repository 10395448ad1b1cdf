use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;
use crate::error::{dimension, validation, Result};

/// Initial path `ξ₀` of the leader on `[-b, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderInitial {
    Constant { value: Vec<f64> },
    /// Ornstein–Uhlenbeck path started at `start` at time `-b`,
    /// `dξ = -reversion·ξ dt + volatility dW`, sampled with the exact transition.
    OuPath { start: Vec<f64>, reversion: f64, volatility: f64 },
    /// `start + volatility·W(t + b)`.
    ScaledBrownian { start: Vec<f64>, volatility: f64 },
}

impl LeaderInitial {
    pub fn validate(&self, n0: usize) -> Result<()> {
        let (v, params): (&Vec<f64>, Vec<f64>) = match self {
            LeaderInitial::Constant { value } => (value, vec![]),
            LeaderInitial::OuPath { start, reversion, volatility } => (start, vec![*reversion, *volatility]),
            LeaderInitial::ScaledBrownian { start, volatility } => (start, vec![*volatility]),
        };
        if v.len() != n0 {
            return Err(dimension(format!("leader initial value has {} coordinates, expected n0 = {n0}", v.len())));
        }
        if v.iter().chain(&params).any(|x| !x.is_finite()) || params.iter().any(|x| *x < 0.0) {
            return Err(validation("leader initial parameters must be finite with nonnegative rates"));
        }
        Ok(())
    }

    /// Exponent `q̃` with `E|ξ₀(t) - ξ₀(s)|² ≤ C|t - s|^q̃`.
    pub fn increment_exponent(&self) -> f64 {
        1.0
    }

    /// Path on the `neg_steps + 1` grid points of `[-b, 0]`, row-major by time.
    pub fn sample<R: Rng + ?Sized>(&self, grid: &TimeGrid, rng: &mut R) -> Vec<f64> {
        let m = grid.neg_steps() + 1;
        let h = grid.step();
        match self {
            LeaderInitial::Constant { value } => value.repeat(m),
            LeaderInitial::ScaledBrownian { start, volatility } => {
                let mut out = Vec::with_capacity(m * start.len());
                out.extend_from_slice(start);
                for j in 1..m {
                    for k in 0..start.len() {
                        let z: f64 = rng.sample(StandardNormal);
                        let prev = out[(j - 1) * start.len() + k];
                        out.push(prev + volatility * h.sqrt() * z);
                    }
                }
                out
            }
            LeaderInitial::OuPath { start, reversion, volatility } => {
                let decay = (-reversion * h).exp();
                let sd = if *reversion > 0.0 {
                    volatility * ((1.0 - decay * decay) / (2.0 * reversion)).sqrt()
                } else {
                    volatility * h.sqrt()
                };
                let mut out = Vec::with_capacity(m * start.len());
                out.extend_from_slice(start);
                for j in 1..m {
                    for k in 0..start.len() {
                        let z: f64 = rng.sample(StandardNormal);
                        let prev = out[(j - 1) * start.len() + k];
                        out.push(decay * prev + sd * z);
                    }
                }
                out
            }
        }
    }
}

/// Law of the follower initial states `ξ₁^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FollowerInitial {
    Constant { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
    /// `left` or `right` with probability one half each, plus independent
    /// `N(0, jitter²)` noise on every coordinate.
    TwoPoint { left: Vec<f64>, right: Vec<f64>, jitter: f64 },
}

impl FollowerInitial {
    pub fn validate(&self, n1: usize) -> Result<()> {
        let (vs, s): (Vec<&Vec<f64>>, f64) = match self {
            FollowerInitial::Constant { value } => (vec![value], 0.0),
            FollowerInitial::Gaussian { mean, std } => (vec![mean], *std),
            FollowerInitial::TwoPoint { left, right, jitter } => (vec![left, right], *jitter),
        };
        if vs.iter().any(|v| v.len() != n1) {
            return Err(dimension(format!("follower initial value must have n1 = {n1} coordinates")));
        }
        if vs.iter().any(|v| v.iter().any(|x| !x.is_finite())) || !(s.is_finite() && s >= 0.0) {
            return Err(validation("follower initial parameters must be finite with nonnegative spread"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            FollowerInitial::Constant { value } => value.clone(),
            FollowerInitial::Gaussian { mean, std } => mean
                .iter()
                .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            FollowerInitial::TwoPoint { left, right, jitter } => {
                let base = if rng.random_bool(0.5) { left } else { right };
                base.iter()
                    .map(|m| m + jitter * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn constant_path_is_flat() {
        let g = TimeGrid::new(0.5, 1.0, 0.1).unwrap();
        let p = LeaderInitial::Constant { value: vec![2.0, -1.0] }.sample(&g, &mut rng_from(1));
        assert_eq!(p.len(), 12);
        assert!(p.chunks(2).all(|c| c == [2.0, -1.0]));
    }

    #[test]
    fn noiseless_ou_decays_exponentially() {
        let g = TimeGrid::new(1.0, 1.0, 0.125).unwrap();
        let p = LeaderInitial::OuPath { start: vec![3.0], reversion: 2.0, volatility: 0.0 }
            .sample(&g, &mut rng_from(1));
        for (j, x) in p.iter().enumerate() {
            let want = 3.0 * (-2.0 * 0.125 * j as f64).exp();
            assert!((x - want).abs() < 1e-12 * 3.0);
        }
    }

    #[test]
    fn brownian_increment_variance() {
        let (b, s) = (1.0, 0.7);
        let g = TimeGrid::new(b, 1.0, 0.0625).unwrap();
        let fam = LeaderInitial::ScaledBrownian { start: vec![0.0], volatility: s };
        let mut rng = rng_from(2);
        let lag = g.neg_steps() / 4;
        let reps = 10_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let p = fam.sample(&g, &mut rng);
            acc += (p[2 * lag] - p[lag]).powi(2);
        }
        let want = s * s * b / 4.0;
        assert!((acc / reps as f64 / want - 1.0).abs() < 0.05);
    }

    #[test]
    fn follower_families() {
        let mut rng = rng_from(3);
        let two = FollowerInitial::TwoPoint { left: vec![-1.0], right: vec![1.0], jitter: 0.0 };
        let xs: Vec<f64> = (0..2000).map(|_| two.sample(&mut rng)[0]).collect();
        assert!(xs.iter().all(|x| x.abs() == 1.0));
        assert!((xs.iter().sum::<f64>() / 2000.0).abs() < 0.1);
        assert!(FollowerInitial::Gaussian { mean: vec![0.0], std: -1.0 }.validate(1).is_err());
        assert!(FollowerInitial::Constant { value: vec![0.0] }.validate(2).is_err());
    }
}
