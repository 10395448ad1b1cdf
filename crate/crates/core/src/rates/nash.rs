use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::follower_draws_for;
use crate::dynamics::{evaluate_costs_nplayer, ControlMode, DelayLaw, Engine, ModelSpec, PolicySet, SeedRecord};
use crate::error::{parameter, validation, Result};
use crate::stats::MeanAcc;

/// Admissible-set caps: `E ∫|v₁|² ≤ κ` for follower deviations and
/// `E ∫|v₀|² ≤ γ` for leader deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormCaps {
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub index: usize,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    /// `J(profile) − J(deviation)` per replication, averaged.
    pub improvement_mean: f64,
    pub improvement_stderr: f64,
    /// Monte-Carlo estimate of `E ∫|v|² dt` for the deviating player.
    pub control_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub n: usize,
    pub reps: usize,
    /// Follower 1's cost under the profile.
    pub profile_cost: f64,
    pub profile_cost_stderr: f64,
    pub deviations: Vec<DeviationResult>,
    /// `max(0, max_dev E[J(profile) − J(dev)])`.
    pub epsilon_hat: f64,
    pub leader_profile_cost: f64,
    pub leader_deviations: Vec<DeviationResult>,
    /// `None` when the leader library is empty.
    pub epsilon2_hat: Option<f64>,
    /// Largest paired standard error among the deviations.
    pub noise_floor: f64,
    pub common_random_numbers: bool,
}

fn summarize(index: usize, profile: &[f64], dev: &[(f64, f64)]) -> DeviationResult {
    let cost: MeanAcc = dev.iter().map(|d| d.0).collect();
    let diff: MeanAcc = profile.iter().zip(dev).map(|(p, d)| p - d.0).collect();
    let norm: MeanAcc = dev.iter().map(|d| d.1).collect();
    DeviationResult {
        index,
        cost_mean: cost.mean,
        cost_stderr: cost.stderr(),
        improvement_mean: diff.mean,
        improvement_stderr: diff.stderr(),
        control_norm: norm.mean,
    }
}

fn l2_norm_sq(v: &[f64], h: f64) -> f64 {
    h * v.iter().map(|x| x * x).sum::<f64>()
}

/// Certifies the profile against finite deviation libraries with common
/// random numbers: every arm of replication `r` reuses the same draws.
#[allow(clippy::too_many_arguments)]
pub fn epsilon_nash_certify(
    model: &ModelSpec,
    profile: &PolicySet,
    library: &[PolicySet],
    leader_library: &[PolicySet],
    law: &DelayLaw,
    n: usize,
    reps: usize,
    seed: u64,
    caps: NormCaps,
) -> Result<EpsilonReport> {
    model.validate()?;
    profile.validate()?;
    law.validate()?;
    if library.is_empty() {
        return Err(parameter("the deviation library is empty"));
    }
    if !(2..=64).contains(&n) {
        return Err(parameter(format!("certification runs the full game and needs 2 ≤ N ≤ 64, got {n}")));
    }
    if reps < 2 {
        return Err(parameter("need at least two replications"));
    }
    for p in library.iter().chain(leader_library) {
        p.validate()?;
    }
    let engine = Engine::new(model)?;
    let h = engine.grid.step();
    type Arms = (f64, f64, Vec<(f64, f64)>, Vec<(f64, f64)>);
    let runs = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<Arms> {
            let seeds = SeedRecord::new(seed, r);
            let (leader, draws) = follower_draws_for(model, law, seeds, n)?;
            let base = engine.run_nplayer(profile, &leader, &draws, seeds, ControlMode::Feedback, None)?;
            let (j0, ji) = evaluate_costs_nplayer(&base, model)?;
            let devs = library
                .iter()
                .map(|d| {
                    let b = engine.run_nplayer(profile, &leader, &draws, seeds, ControlMode::Feedback, Some((0, &d.follower)))?;
                    let (_, ji) = evaluate_costs_nplayer(&b, model)?;
                    Ok((ji[0], l2_norm_sq(&b.follower_controls[0], h)))
                })
                .collect::<Result<Vec<_>>>()?;
            let leads = leader_library
                .iter()
                .map(|d| {
                    let policies = PolicySet { leader: d.leader.clone(), ..profile.clone() };
                    let b = engine.run_nplayer(&policies, &leader, &draws, seeds, ControlMode::Feedback, None)?;
                    let (j0, _) = evaluate_costs_nplayer(&b, model)?;
                    Ok((j0, l2_norm_sq(&b.leader_controls, h)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((ji[0], j0, devs, leads))
        })
        .collect::<Result<Vec<_>>>()?;
    let profile_j1: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let profile_j0: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let deviations: Vec<DeviationResult> = (0..library.len())
        .map(|d| summarize(d, &profile_j1, &runs.iter().map(|r| r.2[d]).collect::<Vec<_>>()))
        .collect();
    let leader_deviations: Vec<DeviationResult> = (0..leader_library.len())
        .map(|d| summarize(d, &profile_j0, &runs.iter().map(|r| r.3[d]).collect::<Vec<_>>()))
        .collect();
    if let Some(d) = deviations.iter().find(|d| d.control_norm > caps.kappa) {
        return Err(validation(format!(
            "follower deviation {} has E∫|v|² = {} above the cap κ = {}",
            d.index, d.control_norm, caps.kappa
        )));
    }
    if let Some(d) = leader_deviations.iter().find(|d| d.control_norm > caps.gamma) {
        return Err(validation(format!(
            "leader deviation {} has E∫|v|² = {} above the cap γ = {}",
            d.index, d.control_norm, caps.gamma
        )));
    }
    let best = |ds: &[DeviationResult]| ds.iter().map(|d| d.improvement_mean).fold(0.0, f64::max);
    let p1: MeanAcc = profile_j1.iter().copied().collect();
    let p0: MeanAcc = profile_j0.iter().copied().collect();
    Ok(EpsilonReport {
        n,
        reps,
        profile_cost: p1.mean,
        profile_cost_stderr: p1.stderr(),
        epsilon_hat: best(&deviations),
        epsilon2_hat: (!leader_deviations.is_empty()).then(|| best(&leader_deviations)),
        noise_floor: deviations
            .iter()
            .chain(&leader_deviations)
            .map(|d| d.improvement_stderr)
            .fold(0.0, f64::max),
        deviations,
        leader_profile_cost: p0.mean,
        leader_deviations,
        common_random_numbers: true,
    })
}
