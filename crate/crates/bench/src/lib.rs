//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stackmf_core::dynamics::{
    Atom, CoefficientSet, CostSet, Family, FollowerInitial, LeaderInitial, ModelSpec, PlayerCoefficients, Term,
};
use stackmf_core::measures::DiscreteMeasure;

/// `n` uniform points in `[-1, 1]^dim`, flattened.
pub fn cloud(dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Random support with random positive weights.
pub fn measure(dim: usize, n: usize, seed: u64) -> DiscreteMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let weights = weights.iter().map(|w| w / total).collect();
    DiscreteMeasure::new(dim, cloud(dim, n, seed), weights).expect("valid measure")
}

/// A small interacting model with a delayed leader.
pub fn interacting_model(step: f64) -> ModelSpec {
    ModelSpec {
        n0: 1,
        n1: 1,
        horizon: 1.0,
        step,
        max_delay: 0.25,
        coefficients: CoefficientSet {
            family: Family::SmoothNonlinear,
            lipschitz: 2.0,
            leader: PlayerCoefficients {
                drift: vec![Term::new(0.3, Atom::TanhMean), Term::new(-0.2, Atom::State)],
                diffusion: vec![Term::new(0.3, Atom::One)],
            },
            follower: PlayerCoefficients {
                drift: vec![Term::new(0.5, Atom::TanhMeanMinusState), Term::new(0.3, Atom::SinDelayed)],
                diffusion: vec![Term::new(0.2, Atom::One)],
            },
        },
        costs: CostSet::default(),
        leader_initial: LeaderInitial::Constant { value: vec![0.5] },
        follower_initial: FollowerInitial::Gaussian { mean: vec![0.0], std: 1.0 },
        q: 6.0,
    }
}
