//! Experiment harness. The gap experiments drive the N-player system and its
//! limit with the same noise; the rest estimate empirical-measure rates and
//! certify ε-Nash profiles.
//!
//! Every replication derives all of its randomness from `(seed, replication)`,
//! so results do not depend on how replications are scheduled.

mod nash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    eval_terms, evaluate_costs_nplayer, sample_followers, Args, ControlMode, DelayLaw, Engine, Family, FeatureNeeds,
    Features, FollowerDraw, LeaderDraw, ModelSpec, PolicySet, SeedRecord,
};
use crate::error::{parameter, validation, Error, Result};
use crate::measures::{sorted_quantile_cost, sq_dist, w2_exact_lp, w2_squared_1d, w2_squared_uniform, DiscreteMeasure};
use crate::meanfield::{
    balanced_partition_level, evaluate_costs_limit, simulate_limit_pair, solve_conditional_law, ConditionalLawFlow,
    SolverOptions,
};
use crate::seed::{Stream, StreamKey};
use crate::stats::{loglog, MeanAcc, Ols};

pub use nash::{epsilon_nash_certify, DeviationResult, EpsilonReport, NormCaps};

/// Rate regimes of the convergence theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    General,
    Sigma0ControlFree,
    DiscreteDelta,
    DegenerateDelta,
    LinearInMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    SquaredStateGap,
    CostGap,
}

/// What the exponent applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBase {
    /// `f(N-1)`, the empirical-measure rate.
    F,
    /// `1/N`.
    InverseN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedRate {
    pub exponent: f64,
    pub base: RateBase,
    pub description: String,
}

impl PredictedRate {
    /// Expected log-log slope against `N`, ignoring the logarithm in four
    /// dimensions.
    pub fn n_slope(&self, n1: usize) -> f64 {
        match self.base {
            RateBase::InverseN => -self.exponent,
            RateBase::F => -self.exponent * f_power(n1),
        }
    }
}

/// `p` such that `f(N) ≈ N^{-p}`.
fn f_power(n1: usize) -> f64 {
    if n1 <= 4 {
        0.5
    } else {
        2.0 / n1 as f64
    }
}

/// Exponent table of the convergence results.
pub fn predicted_exponent(n1: usize, q: f64, regime: Regime, quantity: Quantity) -> Result<PredictedRate> {
    if n1 == 0 {
        return Err(parameter("dimension n1 must be at least 1"));
    }
    let (exponent, base) = match (regime, quantity) {
        (Regime::General, _) if !(q > 4.0) => {
            return Err(parameter(format!("the general rate needs q > 4, got {q}")));
        }
        (Regime::General, Quantity::SquaredStateGap) => ((2.0 * q - 4.0) / (3.0 * q - 4.0), RateBase::F),
        (Regime::General, Quantity::CostGap) => ((q - 2.0) / (3.0 * q - 4.0), RateBase::F),
        (Regime::Sigma0ControlFree, Quantity::SquaredStateGap) => (2.0 / 3.0, RateBase::F),
        (Regime::Sigma0ControlFree, Quantity::CostGap) => (1.0 / 3.0, RateBase::F),
        (Regime::DiscreteDelta | Regime::DegenerateDelta, Quantity::SquaredStateGap) => (1.0, RateBase::F),
        (Regime::DiscreteDelta | Regime::DegenerateDelta, Quantity::CostGap) => (0.5, RateBase::F),
        (Regime::LinearInMeasure, Quantity::SquaredStateGap) => (1.0, RateBase::InverseN),
        (Regime::LinearInMeasure, Quantity::CostGap) => (0.5, RateBase::InverseN),
    };
    let p = PredictedRate { exponent, base, description: String::new() };
    let n_rate = -p.n_slope(n1);
    let description = match base {
        RateBase::InverseN => format!("N^-{exponent:.4}"),
        RateBase::F => format!("f(N-1)^{exponent:.4} ~ N^-{n_rate:.4}{}", if n1 == 4 { " (times a log)" } else { "" }),
    };
    Ok(PredictedRate { description, ..p })
}

/// OLS slope of `ln value` on `ln N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
}

pub fn fit_slope(ns: &[usize], values: &[f64]) -> Result<SlopeFit> {
    if ns.len() < 3 {
        return Err(parameter(format!("a slope fit needs at least 3 points, got {}", ns.len())));
    }
    let x: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    let Ols { slope, stderr, r2, .. } = loglog(&x, values)?;
    Ok(SlopeFit { slope, stderr, r2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub count: u64,
}

/// One quantity against `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub quantity: String,
    pub points: Vec<GapPoint>,
    /// `None` when some mean is zero and the slope is undefined.
    pub fit: Option<SlopeFit>,
    pub predicted_slope: Option<f64>,
}

impl GapSeries {
    pub fn new(quantity: impl Into<String>, points: Vec<GapPoint>) -> Self {
        let ns: Vec<usize> = points.iter().map(|p| p.n).collect();
        let means: Vec<f64> = points.iter().map(|p| p.mean).collect();
        let fit = if means.iter().all(|m| *m > 0.0 && m.is_finite()) {
            fit_slope(&ns, &means).ok()
        } else {
            None
        };
        Self { quantity: quantity.into(), points, fit, predicted_slope: None }
    }

    pub fn with_prediction(mut self, slope: Option<f64>) -> Self {
        self.predicted_slope = slope;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeCheck {
    /// `|slope − target| ≤ tol`.
    Band { target: f64, tol: f64 },
    /// `slope ≤ bound`.
    AtMost { bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Undefined,
    NotAsserted,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Undefined => "undefined",
            Verdict::NotAsserted => "not_asserted",
        }
    }
}

pub fn judge(series: &GapSeries, check: Option<SlopeCheck>) -> Verdict {
    let Some(check) = check else { return Verdict::NotAsserted };
    let Some(fit) = series.fit else { return Verdict::Undefined };
    let ok = match check {
        SlopeCheck::Band { target, tol } => (fit.slope - target).abs() <= tol,
        SlopeCheck::AtMost { bound } => fit.slope <= bound,
    };
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub scenario: String,
    pub ns: Vec<usize>,
    pub reps: usize,
    /// Replications whose fixed point did not converge.
    pub fixed_point_failures: usize,
    pub series: Vec<GapSeries>,
}

impl GapReport {
    pub fn series(&self, quantity: &str) -> Option<&GapSeries> {
        self.series.iter().find(|s| s.quantity == quantity)
    }
}

/// Sizes and solver settings shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: String,
    pub ns: Vec<usize>,
    pub reps: usize,
    pub solver: SolverOptions,
    pub seed: u64,
    /// Partition level for continuous delay laws; chosen from the largest N
    /// when absent.
    pub partition_level: Option<usize>,
}

impl ExperimentPlan {
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.solver.violations();
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            v.push("Ns must be nonempty and strictly increasing".into());
        }
        if self.ns.first().is_some_and(|n| *n < 4) {
            v.push("the smallest N must be at least 4".into());
        }
        if self.reps < 50 {
            v.push(format!("reps = {} must be at least 50", self.reps));
        }
        if self.partition_level == Some(0) {
            v.push("partition level must be at least 1".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            Some(v) => Err(validation(v)),
            None => Ok(()),
        }
    }

    fn n_max(&self) -> usize {
        *self.ns.last().unwrap_or(&0)
    }
}

/// Delay atoms the conditional law is solved on: the law's own atoms when it
/// is discrete, a uniform partition otherwise.
pub fn experiment_partition(model: &ModelSpec, law: &DelayLaw, plan: &ExperimentPlan) -> Result<Vec<(f64, f64)>> {
    match law {
        DelayLaw::Degenerate { value } => Ok(vec![(*value, 1.0)]),
        DelayLaw::Discrete { atoms, probs, .. } => Ok(atoms.iter().copied().zip(probs.iter().copied()).collect()),
        DelayLaw::Uniform { .. } => {
            let level = match plan.partition_level {
                Some(l) => l,
                None => balanced_partition_level(model.n1, model.q, plan.n_max())?,
            };
            law.partition(level)
        }
    }
}

/// Index of the flow atom whose cell contains `delay`.
fn cell_of(flow: &ConditionalLawFlow, delay: f64) -> usize {
    let tol = 1e-9 * flow.grid.step();
    flow.atoms.partition_point(|a| *a <= delay + tol).saturating_sub(1)
}

fn sup_sq_gap(a: &[f64], b: &[f64], dim: usize) -> f64 {
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .map(|(x, y)| sq_dist(x, y))
        .fold(0.0, f64::max)
}

fn check_failures(failures: usize, reps: usize) -> Result<()> {
    if failures * 20 > reps {
        return Err(Error::ExperimentInvalid(format!(
            "fixed point did not converge in {failures} of {reps} replications"
        )));
    }
    Ok(())
}

/// Per-N outcome of one coupled replication. Follower entries hold the mean
/// over the followers in each delay cell, `None` when a cell is empty.
#[derive(Debug, Clone, Default)]
struct CoupledOutcome {
    leader_state: f64,
    follower_state: Vec<Option<f64>>,
    leader_cost: f64,
    follower_cost: Vec<Option<f64>>,
}

fn cell_means(values: impl Iterator<Item = (usize, f64)>, cells: usize) -> Vec<Option<f64>> {
    let mut acc = vec![(0.0, 0usize); cells];
    for (c, v) in values {
        acc[c].0 += v;
        acc[c].1 += 1;
    }
    acc.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()
}

/// One replication: solve `z`, simulate the limit pair under feedback
/// policies and replay its controls in the N-player system for every N.
fn coupled_replication(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    partition: &[(f64, f64)],
    plan: &ExperimentPlan,
    r: u64,
    costs: bool,
) -> Result<(bool, Vec<CoupledOutcome>)> {
    let seeds = SeedRecord::new(plan.seed, r);
    let (flow, report) = solve_conditional_law(model, policies, partition, seeds, &plan.solver)?;
    let engine = Engine::new(model)?;
    let grid = engine.grid;
    let n_max = plan.n_max();
    let leader = LeaderDraw::sample(model, &grid, seeds);
    let ids: Vec<u64> = (0..n_max as u64).collect();
    let draws = sample_followers(model, &grid, law, seeds, &ids);
    let pair = simulate_limit_pair(model, policies, &flow, seeds, &leader, &draws)?;
    let limit_costs = if costs { Some(evaluate_costs_limit(&pair, &flow, model)?) } else { None };
    let cells: Vec<usize> = draws.iter().map(|d| cell_of(&flow, d.delay)).collect();
    let nb = grid.neg_steps();
    let (n0, n1) = (model.n0, model.n1);
    let out = plan
        .ns
        .iter()
        .map(|&n| {
            let mode = ControlMode::Prescribed {
                leader: &pair.leader_controls,
                followers: &pair.follower_controls[..n],
            };
            let bundle = engine.run_nplayer(policies, &leader, &draws[..n], seeds, mode, None)?;
            let leader_state = sup_sq_gap(&bundle.leader_path[nb * n0..], &pair.leader_path[nb * n0..], n0);
            let follower_state = cell_means(
                (0..n).map(|i| (cells[i], sup_sq_gap(&bundle.follower_paths[i], &pair.follower_paths[i], n1))),
                flow.atoms.len(),
            );
            let mut o = CoupledOutcome { leader_state, follower_state, ..Default::default() };
            if let Some((j0, ji)) = &limit_costs {
                let (y0, yi) = evaluate_costs_nplayer(&bundle, model)?;
                o.leader_cost = (y0 - j0).abs();
                o.follower_cost = cell_means((0..n).map(|i| (cells[i], (yi[i] - ji[i]).abs())), flow.atoms.len());
            }
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((report.converged, out))
}

/// Leader series plus the worst delay cell for followers.
fn aggregate(
    ns: &[usize],
    outcomes: &[Vec<CoupledOutcome>],
    leader: impl Fn(&CoupledOutcome) -> f64,
    follower: impl Fn(&CoupledOutcome) -> &[Option<f64>],
) -> (Vec<GapPoint>, Vec<GapPoint>) {
    let mut lead = Vec::new();
    let mut foll = Vec::new();
    for (j, &n) in ns.iter().enumerate() {
        let acc: MeanAcc = outcomes.iter().map(|o| leader(&o[j])).collect();
        lead.push(GapPoint { n, mean: acc.mean, stderr: acc.stderr(), count: acc.count });
        let cells = outcomes.first().map_or(0, |o| follower(&o[j]).len());
        let worst = (0..cells)
            .map(|c| outcomes.iter().filter_map(|o| follower(&o[j])[c]).collect::<MeanAcc>())
            .filter(|a| a.count > 0)
            .max_by(|a, b| a.mean.total_cmp(&b.mean))
            .unwrap_or_default();
        foll.push(GapPoint { n, mean: worst.mean, stderr: worst.stderr(), count: worst.count });
    }
    (lead, foll)
}

fn run_coupled(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    plan: &ExperimentPlan,
    costs: bool,
) -> Result<(usize, Vec<Vec<CoupledOutcome>>)> {
    model.validate()?;
    policies.validate()?;
    law.validate()?;
    plan.validate()?;
    let partition = experiment_partition(model, law, plan)?;
    let results = (0..plan.reps as u64)
        .into_par_iter()
        .map(|r| coupled_replication(model, policies, law, &partition, plan, r, costs))
        .collect::<Result<Vec<_>>>()?;
    let failures = results.iter().filter(|r| !r.0).count();
    check_failures(failures, plan.reps)?;
    Ok((failures, results.into_iter().map(|r| r.1).collect()))
}

/// Squared state gaps `sup_t |y₀ − x₀|²` and, per delay cell,
/// `sup_t |y₁ − x₁|²` under synchronous coupling. Series `leader_state_gap`
/// and `follower_state_gap`.
pub fn state_gap_experiment(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    plan: &ExperimentPlan,
) -> Result<GapReport> {
    let (failures, outcomes) = run_coupled(model, policies, law, plan, false)?;
    let (lead, foll) = aggregate(&plan.ns, &outcomes, |o| o.leader_state, |o| &o.follower_state);
    Ok(GapReport {
        scenario: plan.scenario.clone(),
        ns: plan.ns.clone(),
        reps: plan.reps,
        fixed_point_failures: failures,
        series: vec![GapSeries::new("leader_state_gap", lead), GapSeries::new("follower_state_gap", foll)],
    })
}

/// `|J^{0,N} − J⁰|` and, per delay cell, `|J^{i,δ,N} − J^{i,δ}|` on
/// synchronously coupled trajectories, together with the state gaps.
pub fn cost_gap_experiment(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    plan: &ExperimentPlan,
) -> Result<GapReport> {
    let (failures, outcomes) = run_coupled(model, policies, law, plan, true)?;
    let (lead, foll) = aggregate(&plan.ns, &outcomes, |o| o.leader_state, |o| &o.follower_state);
    let (lc, fc) = aggregate(&plan.ns, &outcomes, |o| o.leader_cost, |o| &o.follower_cost);
    Ok(GapReport {
        scenario: plan.scenario.clone(),
        ns: plan.ns.clone(),
        reps: plan.reps,
        fixed_point_failures: failures,
        series: vec![
            GapSeries::new("leader_state_gap", lead),
            GapSeries::new("follower_state_gap", foll),
            GapSeries::new("leader_cost_gap", lc),
            GapSeries::new("follower_cost_gap", fc),
        ],
    })
}

/// Squared W₂ between two uniform clouds of possibly different sizes, or
/// between a uniform cloud and a weighted measure, exact in one dimension.
fn w2_sq_cloud_vs(dim: usize, cloud: &[f64], nu: &DiscreteMeasure, sub: Option<StreamKey>, cap: usize) -> Result<f64> {
    let mu = DiscreteMeasure::uniform(dim, cloud.to_vec())?;
    if dim == 1 {
        return w2_squared_1d(&mu, nu);
    }
    let (mu, nu) = match sub {
        Some(key) => {
            let mut rng = key.rng();
            (mu.subsample(cap, &mut rng)?, nu.subsample(cap, &mut rng)?)
        }
        None => (mu, nu.clone()),
    };
    Ok(w2_exact_lp(&mu, &nu)?.0.powi(2))
}

/// `E ∫₀^T W₂²((1/(N−1)) Σ_j δ_{x₁^j(t)}, z(t)) dt` for `N − 1` i.i.d. limit
/// followers sharing the leader path; series `wasserstein_gap`.
pub fn wasserstein_gap_curve(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    plan: &ExperimentPlan,
) -> Result<GapReport> {
    model.validate()?;
    policies.validate()?;
    law.validate()?;
    plan.validate()?;
    let partition = experiment_partition(model, law, plan)?;
    let cap = plan.solver.max_support;
    let results = (0..plan.reps as u64)
        .into_par_iter()
        .map(|r| -> Result<(bool, Vec<f64>)> {
            let seeds = SeedRecord::new(plan.seed, r);
            let (flow, report) = solve_conditional_law(model, policies, &partition, seeds, &plan.solver)?;
            let grid = flow.grid;
            let leader = LeaderDraw::sample(model, &grid, seeds);
            let ids: Vec<u64> = (0..plan.n_max() as u64 - 1).collect();
            let draws = sample_followers(model, &grid, law, seeds, &ids);
            let pair = simulate_limit_pair(model, policies, &flow, seeds, &leader, &draws)?;
            let n1 = model.n1;
            let h = grid.step();
            let mut integrals = vec![0.0; plan.ns.len()];
            for k in 0..grid.pos_steps() {
                let z = flow.law_at(k)?;
                let cloud: Vec<f64> = pair.follower_paths.iter().flat_map(|p| p[k * n1..(k + 1) * n1].iter().copied()).collect();
                for (j, &n) in plan.ns.iter().enumerate() {
                    let key = seeds.key(Stream::Subsample, k as u64).with_sub(n as u64);
                    integrals[j] += h * w2_sq_cloud_vs(n1, &cloud[..(n - 1) * n1], &z, Some(key), cap)?;
                }
            }
            Ok((report.converged, integrals))
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = results.iter().filter(|r| !r.0).count();
    check_failures(failures, plan.reps)?;
    let points = plan
        .ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let acc: MeanAcc = results.iter().map(|r| r.1[j]).collect();
            GapPoint { n, mean: acc.mean, stderr: acc.stderr(), count: acc.count }
        })
        .collect();
    Ok(GapReport {
        scenario: plan.scenario.clone(),
        ns: plan.ns.clone(),
        reps: plan.reps,
        fixed_point_failures: failures,
        series: vec![GapSeries::new("wasserstein_gap", points)],
    })
}

/// `W₂²(δ_x, ν) = |x|² − 2⟨x, mean ν⟩ + M₂²(ν)`.
pub fn w2_squared_dirac(x: &[f64], nu: &DiscreteMeasure) -> Result<f64> {
    if x.len() != nu.dim() {
        return Err(crate::error::dimension("point and measure dimensions differ"));
    }
    Ok(nu.iter().map(|(y, w)| w * sq_dist(x, y)).sum())
}

/// `E W₂²(μ_N, μ)` for i.i.d. standard Gaussian samples in dimension `n1`.
/// In one dimension `μ` is represented by a reference sample of size
/// `20 · max N` and the quantile coupling is exact; in higher dimensions the
/// two-sample distance `W₂²(μ_N, μ'_N)` between independent samples is used,
/// which has the same rate. Series `empirical_rate`.
pub fn empirical_rate_experiment(n1: usize, ns: &[usize], reps: usize, seed: u64) -> Result<GapSeries> {
    if n1 == 0 || ns.is_empty() || reps == 0 {
        return Err(parameter("empirical rate experiment needs n1, Ns and reps"));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] < 2 {
        return Err(parameter("Ns must be strictly increasing and at least 2"));
    }
    let n_ref = 20 * ns[ns.len() - 1];
    let sample = |r: u64, sub: u64, n: usize| -> Vec<f64> {
        let mut rng = StreamKey::new(seed, r, Stream::Sampling, n as u64).with_sub(sub).rng();
        (0..n * n1).map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal)).collect()
    };
    let values = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let reference: Vec<(f64, f64)> = if n1 == 1 {
                let mut s = sample(r, 1, n_ref);
                s.sort_by(f64::total_cmp);
                s.into_iter().map(|x| (x, 1.0 / n_ref as f64)).collect()
            } else {
                Vec::new()
            };
            ns.iter()
                .map(|&n| {
                    let a = sample(r, 0, n);
                    if n1 == 1 {
                        let mut a: Vec<(f64, f64)> = a.iter().map(|x| (*x, 1.0 / n as f64)).collect();
                        a.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
                        Ok(sorted_quantile_cost(&a, &reference))
                    } else {
                        w2_squared_uniform(n1, &a, &sample(r, 2, n))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points = ns
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let acc: MeanAcc = values.iter().map(|v| v[j]).collect();
            GapPoint { n, mean: acc.mean, stderr: acc.stderr(), count: acc.count }
        })
        .collect();
    Ok(GapSeries::new("empirical_rate", points))
}

/// Result of the orthogonality check for the measure-linear drift part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaReport {
    pub n: usize,
    pub step: usize,
    pub replications: usize,
    /// `E |(1/(N−1)) Σ_j η^j|²`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `(1/(N−1)) E |η^j|²`.
    pub rhs: f64,
    pub ratio: f64,
    pub fixed_point_failures: usize,
}

/// `η^j = ∫ ḡ dz(t) − ḡ(x₁^j(t))` where `ḡ` is the measure-linear part of the
/// follower drift. Each of `blocks` leader draws gets one solved flow and
/// `sets` independent groups of `N − 1` limit followers.
#[allow(clippy::too_many_arguments)]
pub fn eta_orthogonality_experiment(
    model: &ModelSpec,
    policies: &PolicySet,
    law: &DelayLaw,
    n: usize,
    blocks: usize,
    sets: usize,
    step: usize,
    solver: &SolverOptions,
    seed: u64,
) -> Result<EtaReport> {
    model.validate()?;
    law.validate()?;
    if model.coefficients.family != Family::LinearInMeasure {
        return Err(parameter("the orthogonality check needs linear-in-measure coefficients"));
    }
    let linear: Vec<_> = model
        .coefficients
        .follower
        .drift
        .iter()
        .copied()
        .filter(|t| t.atom.reads_measure())
        .collect();
    if linear.is_empty() {
        return Err(parameter("the follower drift does not read the measure"));
    }
    if n < 3 || blocks == 0 || sets == 0 {
        return Err(parameter("need N ≥ 3 and at least one block and set"));
    }
    let grid = model.grid()?;
    if step > grid.pos_steps() {
        return Err(parameter(format!("step {step} is beyond the horizon")));
    }
    let plan = ExperimentPlan {
        scenario: String::new(),
        ns: vec![n],
        reps: 50,
        solver: *solver,
        seed,
        partition_level: None,
    };
    let partition = experiment_partition(model, law, &plan)?;
    let n1 = model.n1;
    let needs = FeatureNeeds::all();
    let eval = |feats: &Features, out: &mut [f64]| {
        let a = Args { x: &[], v: &[], delayed: &[], feats, delta: 0.0, t: 0.0 };
        for (k, o) in out.iter_mut().enumerate() {
            *o = eval_terms(&linear, &a, k);
        }
    };
    let per_block = (0..blocks as u64)
        .into_par_iter()
        .map(|b| -> Result<(bool, Vec<(f64, f64)>)> {
            let seeds = SeedRecord::new(seed, b);
            let (flow, report) = solve_conditional_law(model, policies, &partition, seeds, solver)?;
            let leader = LeaderDraw::sample(model, &grid, seeds);
            let mut zbar = vec![0.0; n1];
            eval(&flow.features[step], &mut zbar);
            let m = n - 1;
            let ids: Vec<u64> = (0..(sets * m) as u64).collect();
            let draws = sample_followers(model, &grid, law, seeds, &ids);
            let pair = simulate_limit_pair(model, policies, &flow, seeds, &leader, &draws)?;
            let mut gx = vec![0.0; n1];
            let out = (0..sets)
                .map(|s| {
                    let mut sum = vec![0.0; n1];
                    let mut sq = 0.0;
                    for j in s * m..(s + 1) * m {
                        let x = &pair.follower_paths[j][step * n1..(step + 1) * n1];
                        eval(&Features::of_cloud(x, n1, needs), &mut gx);
                        for c in 0..n1 {
                            let eta = zbar[c] - gx[c];
                            sum[c] += eta;
                            sq += eta * eta;
                        }
                    }
                    let mean_sq = sum.iter().map(|v| (v / m as f64).powi(2)).sum::<f64>();
                    (mean_sq, sq / m as f64)
                })
                .collect();
            Ok((report.converged, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = per_block.iter().filter(|b| !b.0).count();
    check_failures(failures, blocks)?;
    let lhs: MeanAcc = per_block.iter().flat_map(|b| b.1.iter().map(|v| v.0)).collect();
    let second: MeanAcc = per_block.iter().flat_map(|b| b.1.iter().map(|v| v.1)).collect();
    let rhs = second.mean / (n - 1) as f64;
    Ok(EtaReport {
        n,
        step,
        replications: lhs.count as usize,
        lhs: lhs.mean,
        lhs_stderr: lhs.stderr(),
        rhs,
        ratio: lhs.mean / rhs,
        fixed_point_failures: failures,
    })
}

fn w2_sq_uniform_any(dim: usize, a: &[f64], b: &[f64]) -> Result<f64> {
    if dim == 1 {
        w2_squared_1d(&DiscreteMeasure::uniform(1, a.to_vec())?, &DiscreteMeasure::uniform(1, b.to_vec())?)
    } else {
        w2_squared_uniform(dim, a, b)
    }
}

/// `(∫ W₂²(μ^y_t, μ^x_t) dt, ∫ (1/N) Σ_i |y_i(t) − x_i(t)|² dt)` for paired
/// follower paths on `[0, T]`; the first never exceeds the second because the
/// identity pairing is one coupling.
pub fn coupling_dominance(y: &[Vec<f64>], x: &[Vec<f64>], dim: usize, h: f64) -> Result<(f64, f64)> {
    if y.len() != x.len() || y.is_empty() {
        return Err(validation("need the same nonzero number of paths on both sides"));
    }
    let steps = y[0].len() / dim;
    let n = y.len() as f64;
    let (mut w, mut g) = (0.0, 0.0);
    for k in 0..steps.saturating_sub(1) {
        let a: Vec<f64> = y.iter().flat_map(|p| p[k * dim..(k + 1) * dim].iter().copied()).collect();
        let b: Vec<f64> = x.iter().flat_map(|p| p[k * dim..(k + 1) * dim].iter().copied()).collect();
        w += h * w2_sq_uniform_any(dim, &a, &b)?;
        g += h * y.iter().zip(x).map(|(p, q)| sq_dist(&p[k * dim..(k + 1) * dim], &q[k * dim..(k + 1) * dim])).sum::<f64>() / n;
    }
    Ok((w, g))
}

/// `(W₂²(μ_N, μ_N^{−i}), (1/N) W₂²(δ_{x_i}, μ_N^{−i}))` for a cloud of `N`
/// points; the first never exceeds the second.
pub fn leave_one_out_bound(cloud: &[f64], dim: usize, i: usize) -> Result<(f64, f64)> {
    let n = cloud.len() / dim;
    if n < 2 || i >= n {
        return Err(validation("need at least two points and a valid index"));
    }
    let full = DiscreteMeasure::uniform(dim, cloud.to_vec())?;
    let rest: Vec<f64> = cloud
        .chunks_exact(dim)
        .enumerate()
        .filter(|(j, _)| *j != i)
        .flat_map(|(_, p)| p.iter().copied())
        .collect();
    let loo = DiscreteMeasure::uniform(dim, rest)?;
    let lhs = w2_exact_lp(&full, &loo)?.0.powi(2);
    let rhs = w2_squared_dirac(&cloud[i * dim..(i + 1) * dim], &loo)? / n as f64;
    Ok((lhs, rhs))
}

pub(crate) fn follower_draws_for(
    model: &ModelSpec,
    law: &DelayLaw,
    seeds: SeedRecord,
    n: usize,
) -> Result<(LeaderDraw, Vec<FollowerDraw>)> {
    let grid = model.grid()?;
    let ids: Vec<u64> = (0..n as u64).collect();
    Ok((LeaderDraw::sample(model, &grid, seeds), sample_followers(model, &grid, law, seeds, &ids)))
}

#[cfg(test)]
mod tests;
