//! Scenario files: one JSON document per experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stackmf_core::dynamics::{DelayLaw, ModelSpec, PolicySet};
use stackmf_core::meanfield::SolverOptions;
use stackmf_core::rates::{NormCaps, Regime, SlopeCheck};

use crate::error::CliError;

/// Noise and control dimensions. The engine uses diagonal noise, so each
/// must equal the matching state dimension; the block exists so that files
/// can state them explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDims {
    pub d0: usize,
    pub d1: usize,
    pub p0: usize,
    pub p1: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityCheck {
    pub quantity: String,
    pub check: SlopeCheck,
}

/// Asserts that follower deviation `index` changes the deviator's cost by
/// `improvement` (profile minus deviation) within `sigmas` standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedImprovement {
    pub index: usize,
    pub improvement: f64,
    #[serde(default = "three")]
    pub sigmas: f64,
}

fn three() -> f64 {
    3.0
}

/// Settings shared by the experiments that sweep N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub ns: Vec<usize>,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition_level: Option<usize>,
    /// Rate regime used for the predicted-exponent column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub checks: Vec<QuantityCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    StateGap(Sweep),
    CostGap(Sweep),
    WassersteinGap(Sweep),
    /// i.i.d. standard Gaussian samples in dimension `model.n1`.
    EmpiricalRate(Sweep),
    EpsilonNash {
        n: usize,
        reps: usize,
        /// Follower deviations; only their `follower` policies are used.
        library: Vec<PolicySet>,
        /// Leader deviations; only their `leader` policies are used.
        #[serde(default)]
        leader_library: Vec<PolicySet>,
        caps: NormCaps,
        /// Fails the run when the estimated epsilon exceeds this.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_epsilon: Option<f64>,
        #[serde(default)]
        expected: Vec<ExpectedImprovement>,
    },
    EtaOrthogonality {
        n: usize,
        blocks: usize,
        sets: usize,
        step: usize,
        band: (f64, f64),
    },
    Holder {
        deltas: Vec<f64>,
        reps: usize,
        /// Independent leader paths whose gap curves are averaged.
        leader_paths: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        check: Option<SlopeCheck>,
    },
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::StateGap(_) => "state_gap",
            Experiment::CostGap(_) => "cost_gap",
            Experiment::WassersteinGap(_) => "wasserstein_gap",
            Experiment::EmpiricalRate(_) => "empirical_rate",
            Experiment::EpsilonNash { .. } => "epsilon_nash",
            Experiment::EtaOrthogonality { .. } => "eta_orthogonality",
            Experiment::Holder { .. } => "holder",
        }
    }

    /// Experiments whose assertions are convergence rates.
    pub fn is_rate(&self) -> bool {
        matches!(
            self,
            Experiment::StateGap(_) | Experiment::CostGap(_) | Experiment::WassersteinGap(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dims: Option<NoiseDims>,
    pub delay_law: DelayLaw,
    pub policies: PolicySet,
    pub experiment: Experiment,
    #[serde(default)]
    pub solver: SolverOptions,
    pub seed: u64,
    /// When false, slope checks are reported but never fail the run.
    #[serde(default = "yes")]
    pub assertions: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

fn finite_all(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

impl ScenarioConfig {
    /// Every rule the file breaks, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = self.model.violations();
        if let Some(d) = self.noise_dims {
            if d.d0 != self.model.n0 || d.p0 != self.model.n0 {
                out.push(format!("noise_dims: d0 = {} and p0 = {} must equal n0 = {}", d.d0, d.p0, self.model.n0));
            }
            if d.d1 != self.model.n1 || d.p1 != self.model.n1 {
                out.push(format!("noise_dims: d1 = {} and p1 = {} must equal n1 = {}", d.d1, d.p1, self.model.n1));
            }
        }
        match self.delay_law.validate() {
            Err(e) => out.push(format!("delay_law: {e}")),
            Ok(()) => {
                let (_, hi) = self.delay_law.support();
                if hi > self.model.max_delay + 1e-12 {
                    out.push(format!("delay_law: support reaches {hi}, beyond max_delay b = {}", self.model.max_delay));
                }
            }
        }
        out.extend(self.policies.violations());
        out.extend(self.solver.violations().into_iter().map(|v| format!("solver: {v}")));
        if self.assertions && self.experiment.is_rate() && !(self.model.q > 4.0) {
            out.push(format!(
                "model.q = {} but rate assertions need q > 4 (moment condition on the initial data); set assertions to false to run anyway",
                self.model.q
            ));
        }
        match &self.experiment {
            Experiment::StateGap(s) | Experiment::CostGap(s) | Experiment::WassersteinGap(s) | Experiment::EmpiricalRate(s) => {
                let min_n = if matches!(self.experiment, Experiment::EmpiricalRate(_)) { 2 } else { 4 };
                if s.ns.is_empty() || s.ns.windows(2).any(|w| w[0] >= w[1]) {
                    out.push("experiment.ns must be nonempty and strictly increasing".into());
                }
                if s.ns.first().is_some_and(|n| *n < min_n) {
                    out.push(format!("experiment.ns must start at {min_n} or more"));
                }
                if s.ns.len() < 3 {
                    out.push("experiment.ns needs at least 3 sizes for a slope".into());
                }
                let min_reps = if matches!(self.experiment, Experiment::EmpiricalRate(_)) { 2 } else { 50 };
                if s.reps < min_reps {
                    out.push(format!("experiment.reps = {} must be at least {min_reps}", s.reps));
                }
                if s.partition_level == Some(0) {
                    out.push("experiment.partition_level must be at least 1".into());
                }
                let known = self.series_names();
                for c in &s.checks {
                    if !known.contains(&c.quantity.as_str()) {
                        out.push(format!(
                            "experiment.checks: {} is not produced by this experiment (one of {})",
                            c.quantity,
                            known.join(", ")
                        ));
                    }
                    let ok = match c.check {
                        SlopeCheck::Band { target, tol } => target.is_finite() && tol.is_finite() && tol >= 0.0,
                        SlopeCheck::AtMost { bound } => bound.is_finite(),
                    };
                    if !ok {
                        out.push(format!("experiment.checks: check on {} has a non-finite or negative bound", c.quantity));
                    }
                }
            }
            Experiment::EpsilonNash { n, reps, library, leader_library, caps, max_epsilon, expected } => {
                if max_epsilon.is_some_and(|e| !(e.is_finite() && e >= 0.0)) {
                    out.push("experiment.max_epsilon must be finite and nonnegative".into());
                }
                for e in expected {
                    if e.index >= library.len() {
                        out.push(format!("experiment.expected: deviation {} is not in the library", e.index));
                    }
                    if !(e.improvement.is_finite() && e.sigmas.is_finite() && e.sigmas > 0.0) {
                        out.push(format!("experiment.expected: entry for deviation {} is not finite", e.index));
                    }
                }
                if !(2..=64).contains(n) {
                    out.push(format!("experiment.n = {n} must lie in [2, 64]"));
                }
                if *reps < 2 {
                    out.push("experiment.reps must be at least 2".into());
                }
                if library.is_empty() {
                    out.push("experiment.library must not be empty".into());
                }
                for (i, p) in library.iter().chain(leader_library).enumerate() {
                    out.extend(p.violations().into_iter().map(|v| format!("experiment deviation {i}: {v}")));
                }
                if !(caps.kappa >= 0.0 && caps.gamma >= 0.0 && finite_all(&[caps.kappa, caps.gamma])) {
                    out.push("experiment.caps must be finite and nonnegative".into());
                }
            }
            Experiment::EtaOrthogonality { n, blocks, sets, step, band } => {
                if *n < 3 {
                    out.push("experiment.n must be at least 3".into());
                }
                if *blocks == 0 || *sets == 0 {
                    out.push("experiment.blocks and experiment.sets must be positive".into());
                }
                if let Ok(g) = self.model.grid() {
                    if *step > g.pos_steps() {
                        out.push(format!("experiment.step = {step} is beyond the horizon"));
                    }
                }
                if !(finite_all(&[band.0, band.1]) && band.0 < band.1) {
                    out.push("experiment.band must be an increasing finite pair".into());
                }
            }
            Experiment::Holder { deltas, reps, leader_paths, .. } => {
                if deltas.len() < 4 {
                    out.push(format!("experiment.deltas has {} entries, need at least 4", deltas.len()));
                }
                if !finite_all(deltas) || deltas.iter().any(|d| *d < 0.0 || *d > self.model.max_delay + 1e-12) {
                    out.push("experiment.deltas must lie in [0, max_delay]".into());
                }
                if *reps < 100 {
                    out.push(format!("experiment.reps = {reps} must be at least 100"));
                }
                if *leader_paths == 0 {
                    out.push("experiment.leader_paths must be positive".into());
                }
            }
        }
        out
    }

    /// Series a sweep experiment reports, in output order.
    pub fn series_names(&self) -> Vec<&'static str> {
        match self.experiment {
            Experiment::StateGap(_) => vec!["leader_state_gap", "follower_state_gap"],
            Experiment::CostGap(_) => vec!["leader_state_gap", "follower_state_gap", "leader_cost_gap", "follower_cost_gap"],
            Experiment::WassersteinGap(_) => vec!["wasserstein_gap"],
            Experiment::EmpiricalRate(_) if self.model.n1 == 4 => vec!["empirical_rate", "empirical_rate_over_log"],
            Experiment::EmpiricalRate(_) => vec!["empirical_rate"],
            _ => vec![],
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(v))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

/// Parses and validates a scenario file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses without validating.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, cfg.to_json() + "\n").map_err(|e| CliError::Io(path.to_path_buf(), e))
}
