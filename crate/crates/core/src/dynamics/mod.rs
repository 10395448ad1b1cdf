//! Euler–Maruyama engine for the delayed N-player system and the building
//! blocks shared with the limit system: time grid, delay laws, initial data,
//! coefficient and policy contracts, and cost evaluation.
//!
//! The leader lives on `[-b, T]` and the followers on `[0, T]`. Follower `i`
//! reads the leader state `δ_i` earlier, with `δ_i` snapped to the grid so
//! the lookup is exact. The leader sees the empirical measure of all
//! followers; follower `i` sees the empirical measure of the others.

mod coefficients;
mod delay;
mod features;
mod grid;
mod initial;
mod model;
mod policy;
mod probe;
mod simulate;

pub use coefficients::{
    lipschitz_bound, Args, Atom, CoefficientRole, CoefficientSet, CostAtom, CostSet, CostTerm, Family,
    PlayerCoefficients, Term,
};
pub use delay::DelayLaw;
pub use features::{FeatureNeeds, FeatureSums, Features};
pub use grid::{snap_delays_to_grid, TimeGrid};
pub use initial::{FollowerInitial, LeaderInitial};
pub use model::ModelSpec;
pub use policy::{PolicyAtom, PolicySet, PolicyTerm};
pub use probe::lipschitz_probe;
pub use simulate::{
    evaluate_costs_nplayer, sample_delays, sample_followers, simulate_nplayer, simulate_nplayer_with,
    ControlMode, FollowerDraw, LeaderDraw, SeedRecord, TrajectoryBundle,
};

pub(crate) use coefficients::eval_terms;
pub(crate) use simulate::Engine;

#[cfg(test)]
mod tests;
