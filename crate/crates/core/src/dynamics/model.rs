use serde::{Deserialize, Serialize};

use super::coefficients::{CoefficientSet, CostSet};
use super::features::FeatureNeeds;
use super::grid::TimeGrid;
use super::initial::{FollowerInitial, LeaderInitial};
use super::policy::PolicySet;
use crate::error::{validation, Result};

/// Everything that defines one game apart from the delay law and the policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n0: usize,
    pub n1: usize,
    /// Horizon `T`.
    pub horizon: f64,
    /// Euler step `h`.
    pub step: f64,
    /// Largest admissible delay `b`; the leader path is simulated from `-b`.
    pub max_delay: f64,
    pub coefficients: CoefficientSet,
    #[serde(default)]
    pub costs: CostSet,
    pub leader_initial: LeaderInitial,
    pub follower_initial: FollowerInitial,
    /// Moment order of the initial data.
    pub q: f64,
}

impl ModelSpec {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.max_delay, self.horizon, self.step)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n0 == 0 || self.n1 == 0 {
            out.push("model.n0 and model.n1 must be at least 1".to_string());
            return out;
        }
        if let Err(e) = self.grid() {
            out.push(format!("model grid: {e}"));
        }
        if !(self.q.is_finite() && self.q >= 2.0) {
            out.push(format!("model.q must be at least 2, got {}", self.q));
        }
        out.extend(self.coefficients.violations(self.n0, self.n1));
        out.extend(self.costs.violations());
        if let Err(e) = self.leader_initial.validate(self.n0) {
            out.push(format!("model.leader_initial: {e}"));
        }
        if let Err(e) = self.follower_initial.validate(self.n1) {
            out.push(format!("model.follower_initial: {e}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(v) => Err(validation(v)),
            None => Ok(()),
        }
    }

    /// Measure functionals read by dynamics and policies.
    pub fn dynamic_needs(&self, policies: &PolicySet) -> FeatureNeeds {
        self.coefficients.needs().union(policies.needs())
    }

    /// Measure functionals read anywhere, costs included.
    pub fn all_needs(&self, policies: &PolicySet) -> FeatureNeeds {
        self.dynamic_needs(policies).union(self.costs.needs())
    }
}
