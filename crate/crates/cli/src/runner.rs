//! Runs one scenario and writes its result files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use stackmf_core::dynamics::{DelayLaw, ModelSpec, SeedRecord};
use stackmf_core::meanfield::{holder_exponent_estimate, solve_conditional_law};
use stackmf_core::rates::{
    cost_gap_experiment, empirical_rate_experiment, epsilon_nash_certify, eta_orthogonality_experiment,
    experiment_partition, judge, predicted_exponent, state_gap_experiment, wasserstein_gap_curve, ExperimentPlan,
    GapPoint, GapReport, GapSeries, Quantity, SlopeCheck, Verdict,
};
use stackmf_core::stats::{loglog, MeanAcc};

use crate::config::{Experiment, ScenarioConfig, Sweep};
use crate::error::CliError;

pub const CSV_HEADER: &str =
    "scenario,N,reps,gap_mean,gap_stderr,quantity,slope,slope_stderr,predicted_exponent,verdict";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    /// Overrides the config's `out_dir`. Nothing is written when both are absent.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Invalid,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::Invalid => 2,
        }
    }
}

/// One assertion and how it came out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scenario: String,
    /// Player count, or the delay spacing in grid steps for Hölder runs.
    pub n: usize,
    pub reps: usize,
    pub gap_mean: f64,
    pub gap_stderr: Option<f64>,
    pub quantity: String,
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub predicted: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub reason: Option<String>,
    pub rows: Vec<Row>,
    pub checks: Vec<CheckResult>,
    /// The experiment's own report, serialised.
    pub result: Value,
    pub csv: String,
    pub out_dir: Option<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// `--threads`, then `STACKMF_THREADS`, then `None`.
pub fn resolve_threads(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var("STACKMF_THREADS").ok()?.trim().parse().ok())
        .filter(|k| *k > 0)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn render_csv(rows: &[Row]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.n,
            r.reps,
            r.gap_mean,
            opt(r.gap_stderr),
            r.quantity,
            opt(r.slope),
            opt(r.slope_stderr),
            opt(r.predicted),
            r.verdict.as_str()
        );
    }
    s
}

/// Human-readable summary for `--dry-run`.
pub fn plan_summary(cfg: &ScenarioConfig) -> String {
    let mut s = String::new();
    let m = &cfg.model;
    let _ = writeln!(s, "scenario    {}", cfg.name);
    let _ = writeln!(s, "experiment  {}", cfg.experiment.name());
    let _ = writeln!(
        s,
        "model       n0 = {}, n1 = {}, T = {}, h = {}, b = {}, q = {}, family {:?}",
        m.n0, m.n1, m.horizon, m.step, m.max_delay, m.q, m.coefficients.family
    );
    let _ = writeln!(s, "delay law   {:?}", cfg.delay_law);
    let _ = writeln!(
        s,
        "solver      K = {}, tol = {}, max_iter = {}, damping = {}",
        cfg.solver.particles, cfg.solver.tol, cfg.solver.max_iter, cfg.solver.damping
    );
    match &cfg.experiment {
        Experiment::StateGap(w) | Experiment::CostGap(w) | Experiment::WassersteinGap(w) | Experiment::EmpiricalRate(w) => {
            let _ = writeln!(s, "sizes       {:?} x {} replications", w.ns, w.reps);
            if cfg.experiment.is_rate() {
                if let Ok(p) = experiment_partition(&cfg.model, &cfg.delay_law, &plan_of(cfg, w)) {
                    let _ = writeln!(s, "partition   {} delay atoms", p.len());
                }
            }
            for c in &w.checks {
                let _ = writeln!(s, "check       {} {:?}", c.quantity, c.check);
            }
        }
        Experiment::EpsilonNash { n, reps, library, leader_library, .. } => {
            let _ = writeln!(
                s,
                "certify     N = {n}, {reps} replications, {} follower and {} leader deviations",
                library.len(),
                leader_library.len()
            );
        }
        Experiment::EtaOrthogonality { n, blocks, sets, step, band } => {
            let _ = writeln!(s, "eta         N = {n}, step {step}, {blocks} x {sets} replications, band {band:?}");
        }
        Experiment::Holder { deltas, reps, leader_paths, check } => {
            let _ = writeln!(s, "holder      deltas {deltas:?}, {reps} replications x {leader_paths} leader paths");
            if let Some(c) = check {
                let _ = writeln!(s, "check       slope {c:?}");
            }
        }
    }
    let _ = writeln!(s, "seed        {}", cfg.seed);
    let _ = writeln!(s, "assertions  {}", if cfg.assertions { "on" } else { "off" });
    s
}

fn plan_of(cfg: &ScenarioConfig, w: &Sweep) -> ExperimentPlan {
    ExperimentPlan {
        scenario: cfg.name.clone(),
        ns: w.ns.clone(),
        reps: w.reps,
        solver: cfg.solver,
        seed: cfg.seed,
        partition_level: w.partition_level,
    }
}

fn quantity_of(series: &str) -> Quantity {
    if series.ends_with("cost_gap") {
        Quantity::CostGap
    } else {
        Quantity::SquaredStateGap
    }
}

fn empirical_slope(n1: usize) -> f64 {
    if n1 <= 4 {
        -0.5
    } else {
        -2.0 / n1 as f64
    }
}

struct Collected {
    rows: Vec<Row>,
    checks: Vec<CheckResult>,
    result: Value,
}

fn verdict_for(assertions: bool, v: Verdict) -> Verdict {
    if assertions {
        v
    } else {
        Verdict::NotAsserted
    }
}

fn describe(check: &SlopeCheck) -> String {
    match check {
        SlopeCheck::Band { target, tol } => format!("{target} ± {tol}"),
        SlopeCheck::AtMost { bound } => format!("≤ {bound}"),
    }
}

fn series_rows(cfg: &ScenarioConfig, w: &Sweep, series: &[GapSeries], reps: usize, out: &mut Collected) {
    for s in series {
        let check = w.checks.iter().find(|c| c.quantity == s.quantity).map(|c| c.check);
        let verdict = verdict_for(cfg.assertions, judge(s, check));
        if let Some(c) = check {
            out.checks.push(CheckResult {
                name: s.quantity.clone(),
                verdict,
                detail: format!(
                    "slope {} (stderr {}), expected {}",
                    opt(s.fit.map(|f| f.slope)),
                    opt(s.fit.map(|f| f.stderr)),
                    describe(&c)
                ),
            });
        }
        for p in &s.points {
            out.rows.push(Row {
                scenario: cfg.name.clone(),
                n: p.n,
                reps,
                gap_mean: p.mean,
                gap_stderr: Some(p.stderr),
                quantity: s.quantity.clone(),
                slope: s.fit.map(|f| f.slope),
                slope_stderr: s.fit.map(|f| f.stderr),
                predicted: s.predicted_slope,
                verdict,
            });
        }
    }
}

fn gap_sweep(cfg: &ScenarioConfig, w: &Sweep) -> Result<Collected, CliError> {
    let plan = plan_of(cfg, w);
    let (m, p, law) = (&cfg.model, &cfg.policies, &cfg.delay_law);
    let mut report: GapReport = match cfg.experiment {
        Experiment::StateGap(_) => state_gap_experiment(m, p, law, &plan)?,
        Experiment::CostGap(_) => cost_gap_experiment(m, p, law, &plan)?,
        _ => wasserstein_gap_curve(m, p, law, &plan)?,
    };
    let predicted = |name: &str| {
        let r = w.regime?;
        predicted_exponent(m.n1, m.q, r, quantity_of(name)).ok().map(|e| e.n_slope(m.n1))
    };
    report.series = report
        .series
        .into_iter()
        .map(|s| {
            let p = predicted(&s.quantity);
            s.with_prediction(p)
        })
        .collect();
    let mut out = Collected { rows: vec![], checks: vec![], result: Value::Null };
    series_rows(cfg, w, &report.series, report.reps, &mut out);
    out.result = serde_json::to_value(&report).expect("report serialises");
    Ok(out)
}

fn empirical(cfg: &ScenarioConfig, w: &Sweep) -> Result<Collected, CliError> {
    let n1 = cfg.model.n1;
    let base = empirical_rate_experiment(n1, &w.ns, w.reps, cfg.seed)?.with_prediction(Some(empirical_slope(n1)));
    let mut series = vec![base.clone()];
    if n1 == 4 {
        let points = base
            .points
            .iter()
            .map(|p| {
                let l = (p.n as f64).ln();
                GapPoint { mean: p.mean / l, stderr: p.stderr / l, ..*p }
            })
            .collect();
        series.push(GapSeries::new("empirical_rate_over_log", points).with_prediction(Some(-0.5)));
    }
    let mut out = Collected { rows: vec![], checks: vec![], result: Value::Null };
    series_rows(cfg, w, &series, w.reps, &mut out);
    out.result = json!({ "series": series });
    Ok(out)
}

fn flow_partition(model: &ModelSpec, law: &DelayLaw) -> Result<Vec<(f64, f64)>, CliError> {
    let plan = ExperimentPlan {
        scenario: String::new(),
        ns: vec![],
        reps: 0,
        solver: Default::default(),
        seed: 0,
        partition_level: Some(8),
    };
    Ok(experiment_partition(model, law, &plan)?)
}

fn holder(cfg: &ScenarioConfig, deltas: &[f64], reps: usize, paths: usize, check: Option<SlopeCheck>) -> Result<Collected, CliError> {
    let partition = flow_partition(&cfg.model, &cfg.delay_law)?;
    let reports = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let seeds = SeedRecord::new(cfg.seed, p);
            let (flow, _) = solve_conditional_law(&cfg.model, &cfg.policies, &partition, seeds, &cfg.solver)?;
            holder_exponent_estimate(&cfg.model, &cfg.policies, &flow, deltas, reps)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spacings = reports[0].spacings.clone();
    let accs: Vec<MeanAcc> = (0..spacings.len()).map(|j| reports.iter().map(|r| r.gaps[j]).collect()).collect();
    let gaps: Vec<f64> = accs.iter().map(|a| a.mean).collect();
    let flagged = gaps.iter().any(|g| !(*g > 0.0));
    let fit = if flagged { None } else { loglog(&spacings, &gaps).ok() };
    let raw = match (check, fit) {
        (None, _) => Verdict::NotAsserted,
        (Some(_), None) => Verdict::Undefined,
        (Some(SlopeCheck::Band { target, tol }), Some(f)) => pass((f.slope - target).abs() <= tol),
        (Some(SlopeCheck::AtMost { bound }), Some(f)) => pass(f.slope <= bound),
    };
    let verdict = verdict_for(cfg.assertions, raw);
    let predicted = cfg.model.leader_initial.increment_exponent().min(1.0);
    let h = cfg.model.step;
    let mut out = Collected { rows: vec![], checks: vec![], result: Value::Null };
    if let Some(c) = check {
        out.checks.push(CheckResult {
            name: "holder_exponent".into(),
            verdict,
            detail: format!("exponent {} (stderr {}), expected {}", opt(fit.map(|f| f.slope)), opt(fit.map(|f| f.stderr)), describe(&c)),
        });
    }
    for (j, s) in spacings.iter().enumerate() {
        out.rows.push(Row {
            scenario: cfg.name.clone(),
            n: (s / h).round() as usize,
            reps,
            gap_mean: gaps[j],
            gap_stderr: (paths > 1).then(|| accs[j].stderr()),
            quantity: "holder_gap".into(),
            slope: fit.map(|f| f.slope),
            slope_stderr: fit.map(|f| f.stderr),
            predicted: Some(predicted),
            verdict,
        });
    }
    out.result = json!({
        "spacings": spacings,
        "gaps": gaps,
        "exponent": fit.map(|f| f.slope),
        "exponent_stderr": fit.map(|f| f.stderr),
        "flagged": flagged,
        "per_leader_path": reports,
    });
    Ok(out)
}

fn pass(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn collect(cfg: &ScenarioConfig) -> Result<Collected, CliError> {
    match &cfg.experiment {
        Experiment::StateGap(w) | Experiment::CostGap(w) | Experiment::WassersteinGap(w) => gap_sweep(cfg, w),
        Experiment::EmpiricalRate(w) => empirical(cfg, w),
        Experiment::Holder { deltas, reps, leader_paths, check } => holder(cfg, deltas, *reps, *leader_paths, *check),
        Experiment::EtaOrthogonality { n, blocks, sets, step, band } => {
            let r = eta_orthogonality_experiment(
                &cfg.model,
                &cfg.policies,
                &cfg.delay_law,
                *n,
                *blocks,
                *sets,
                *step,
                &cfg.solver,
                cfg.seed,
            )?;
            let verdict = verdict_for(cfg.assertions, pass(r.ratio >= band.0 && r.ratio <= band.1));
            let row = Row {
                scenario: cfg.name.clone(),
                n: r.n,
                reps: r.replications,
                gap_mean: r.ratio,
                gap_stderr: Some(r.lhs_stderr / r.rhs),
                quantity: "eta_ratio".into(),
                slope: None,
                slope_stderr: None,
                predicted: None,
                verdict,
            };
            Ok(Collected {
                rows: vec![row],
                checks: vec![CheckResult {
                    name: "eta_ratio".into(),
                    verdict,
                    detail: format!("ratio {} in [{}, {}]", r.ratio, band.0, band.1),
                }],
                result: serde_json::to_value(&r).expect("report serialises"),
            })
        }
        Experiment::EpsilonNash { n, reps, library, leader_library, caps, max_epsilon, expected } => {
            let r = epsilon_nash_certify(
                &cfg.model,
                &cfg.policies,
                library,
                leader_library,
                &cfg.delay_law,
                *n,
                *reps,
                cfg.seed,
                *caps,
            )?;
            let mut out = Collected { rows: vec![], checks: vec![], result: Value::Null };
            let row = |q: String, mean: f64, se: Option<f64>, v: Verdict| Row {
                scenario: cfg.name.clone(),
                n: r.n,
                reps: r.reps,
                gap_mean: mean,
                gap_stderr: se,
                quantity: q,
                slope: None,
                slope_stderr: None,
                predicted: None,
                verdict: v,
            };
            for d in &r.deviations {
                let name = format!("follower_deviation_{}", d.index);
                let v = match expected.iter().find(|e| e.index == d.index) {
                    None => Verdict::NotAsserted,
                    Some(e) => {
                        let slack = e.sigmas * d.improvement_stderr + 1e-9 * (1.0 + e.improvement.abs());
                        let v = verdict_for(cfg.assertions, pass((d.improvement_mean - e.improvement).abs() <= slack));
                        out.checks.push(CheckResult {
                            name: name.clone(),
                            verdict: v,
                            detail: format!(
                                "improvement {} (stderr {}), expected {} within {} standard errors",
                                d.improvement_mean, d.improvement_stderr, e.improvement, e.sigmas
                            ),
                        });
                        v
                    }
                };
                out.rows.push(row(name, d.improvement_mean, Some(d.improvement_stderr), v));
            }
            for d in &r.leader_deviations {
                out.rows.push(row(
                    format!("leader_deviation_{}", d.index),
                    d.improvement_mean,
                    Some(d.improvement_stderr),
                    Verdict::NotAsserted,
                ));
            }
            let v = match max_epsilon {
                None => Verdict::NotAsserted,
                Some(m) => {
                    let v = verdict_for(cfg.assertions, pass(r.epsilon_hat <= *m));
                    out.checks.push(CheckResult {
                        name: "epsilon_hat".into(),
                        verdict: v,
                        detail: format!("epsilon {} at most {m}", r.epsilon_hat),
                    });
                    v
                }
            };
            out.rows.push(row("epsilon_hat".into(), r.epsilon_hat, Some(r.noise_floor), v));
            if let Some(e2) = r.epsilon2_hat {
                out.rows.push(row("epsilon2_hat".into(), e2, None, Verdict::NotAsserted));
            }
            out.result = serde_json::to_value(&r).expect("report serialises");
            Ok(out)
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn emit(cfg: &ScenarioConfig, dir: &Path, outcome: &RunOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    write(&dir.join("results.csv"), &outcome.csv)?;
    let report = json!({
        "scenario": cfg.name,
        "experiment": cfg.experiment.name(),
        "status": outcome.status,
        "reason": outcome.reason,
        "checks": outcome.checks,
        "result": outcome.result,
    });
    write(&dir.join("report.json"), &(serde_json::to_string_pretty(&report).expect("json") + "\n"))?;
    let manifest = json!({
        "config_sha256": sha256_hex(cfg.to_json().as_bytes()),
        "seed": cfg.seed,
        "stackmf_core": stackmf_core::VERSION,
        "stackmf_cli": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.name(),
        "files": ["results.csv", "report.json"],
    });
    write(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).expect("json") + "\n"))
}

/// Validates, runs and, when an output directory is known, writes the three
/// artifacts. Invalid experiments (fixed-point failures, divergence) come back
/// as `Status::Invalid` with a reason; configuration errors are `Err`.
pub fn run_experiment(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let computed = match opts.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Invalid(vec![format!("thread pool: {e}")]))?;
            pool.install(|| collect(&cfg))
        }
        None => collect(&cfg),
    };
    let out_dir = opts.out_dir.clone().or_else(|| cfg.out_dir.clone());
    let outcome = match computed {
        Ok(c) => {
            let failed = c.checks.iter().any(|k| matches!(k.verdict, Verdict::Fail | Verdict::Undefined));
            let status = if failed { Status::Fail } else { Status::Pass };
            let reason = failed.then(|| {
                let names: Vec<&str> = c
                    .checks
                    .iter()
                    .filter(|k| matches!(k.verdict, Verdict::Fail | Verdict::Undefined))
                    .map(|k| k.name.as_str())
                    .collect();
                format!("assertions failed: {}", names.join(", "))
            });
            RunOutcome { status, reason, csv: render_csv(&c.rows), rows: c.rows, checks: c.checks, result: c.result, out_dir: out_dir.clone() }
        }
        Err(e) if e.exit_code() == 2 => RunOutcome {
            status: Status::Invalid,
            reason: Some(format!("{}: {e}", e.reason())),
            rows: vec![],
            checks: vec![],
            result: Value::Null,
            csv: render_csv(&[]),
            out_dir: out_dir.clone(),
        },
        Err(e) => return Err(e),
    };
    if let Some(dir) = &out_dir {
        emit(&cfg, dir, &outcome)?;
    }
    Ok(outcome)
}
