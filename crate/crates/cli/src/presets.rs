//! Built-in scenarios, one per rate regime plus the auxiliary checks.

use stackmf_core::dynamics::{
    Atom, CoefficientSet, CostAtom, CostSet, CostTerm, DelayLaw, Family, FollowerInitial, LeaderInitial, ModelSpec,
    PlayerCoefficients, PolicyAtom, PolicySet, PolicyTerm, Term,
};
use stackmf_core::meanfield::SolverOptions;
use stackmf_core::rates::{NormCaps, Regime, SlopeCheck};

use crate::config::{ExpectedImprovement, Experiment, QuantityCheck, ScenarioConfig, Sweep};
use crate::error::CliError;

/// `(name, one-line description)` for every preset.
pub const PRESETS: &[(&str, &str)] = &[
    ("degenerate-delay-n1-1", "single delay, n1 = 1: Wasserstein gap curve, slope near -1/2"),
    ("two-atom", "two-atom delay law: follower squared state gap"),
    ("uniform-delay", "uniform delay law: state gap against the general upper bound"),
    ("control-free-sigma0", "Brownian leader feedthrough: Hölder exponent in the delay"),
    ("linear-in-measure", "measure-linear coefficients: O(1/N) state gap and N^-1/2 cost gap"),
    ("epsilon-nash", "convex control cost: certification against self and constant deviations"),
    ("eta-orthogonality", "cross terms of the measure-linear drift average out"),
    ("empirical-rate-n1-1", "i.i.d. Gaussian empirical measure, n1 = 1"),
    ("empirical-rate-n1-3", "i.i.d. Gaussian empirical measure, n1 = 3"),
    ("empirical-rate-n1-4", "i.i.d. Gaussian empirical measure, n1 = 4, divided by log N"),
    ("empirical-rate-n1-6", "i.i.d. Gaussian empirical measure, n1 = 6"),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|p| p.0)
}

pub fn preset(name: &str) -> Result<ScenarioConfig, CliError> {
    let cfg = match name {
        "degenerate-delay-n1-1" => degenerate_delay(),
        "two-atom" => two_atom(),
        "uniform-delay" => uniform_delay(),
        "control-free-sigma0" => control_free_sigma0(),
        "linear-in-measure" => linear_in_measure(),
        "epsilon-nash" => epsilon_nash(),
        "eta-orthogonality" => eta_orthogonality(),
        "empirical-rate-n1-1" => empirical_rate(1),
        "empirical-rate-n1-3" => empirical_rate(3),
        "empirical-rate-n1-4" => empirical_rate(4),
        "empirical-rate-n1-6" => empirical_rate(6),
        _ => return Err(CliError::UnknownPreset(name.to_string())),
    };
    Ok(cfg)
}

fn base_model(n1: usize, horizon: f64, step: f64, max_delay: f64) -> ModelSpec {
    ModelSpec {
        n0: 1,
        n1,
        horizon,
        step,
        max_delay,
        coefficients: CoefficientSet {
            family: Family::SmoothNonlinear,
            lipschitz: 2.0,
            leader: PlayerCoefficients::default(),
            follower: PlayerCoefficients::default(),
        },
        costs: CostSet::default(),
        leader_initial: LeaderInitial::Constant { value: vec![0.5] },
        follower_initial: FollowerInitial::Gaussian { mean: vec![0.0; n1], std: 1.0 },
        q: 6.0,
    }
}

fn scenario(name: &str, model: ModelSpec, delay_law: DelayLaw, experiment: Experiment) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        model,
        noise_dims: None,
        delay_law,
        policies: PolicySet::zero(),
        experiment,
        solver: SolverOptions::default(),
        seed: 20240601,
        assertions: true,
        out_dir: None,
    }
}

fn check(quantity: &str, check: SlopeCheck) -> QuantityCheck {
    QuantityCheck { quantity: quantity.to_string(), check }
}

fn doubling(from: usize, to: usize) -> Vec<usize> {
    std::iter::successors(Some(from), |n| Some(n * 2)).take_while(|n| *n <= to).collect()
}

/// Interacting leader and followers with a mean-reverting pull towards the
/// population and a bounded reaction to the delayed leader.
fn nonlinear(n1: usize, horizon: f64, step: f64, max_delay: f64) -> ModelSpec {
    let mut m = base_model(n1, horizon, step, max_delay);
    m.coefficients.leader = PlayerCoefficients {
        drift: vec![Term::new(0.3, Atom::TanhMean), Term::new(-0.2, Atom::State)],
        diffusion: vec![Term::new(0.3, Atom::One)],
    };
    m.coefficients.follower = PlayerCoefficients {
        drift: vec![Term::new(0.3, Atom::TanhMeanMinusState), Term::new(0.2, Atom::SinDelayed)],
        diffusion: vec![Term::new(0.1, Atom::One)],
    };
    m
}

fn degenerate_delay() -> ScenarioConfig {
    let mut m = nonlinear(1, 0.5, 1.0 / 32.0, 0.25);
    // Two well separated clusters keep the one-dimensional empirical rate at
    // N^-1/2 instead of the faster rate of smooth densities.
    m.follower_initial = FollowerInitial::TwoPoint { left: vec![-1.0], right: vec![1.0], jitter: 0.05 };
    let mut cfg = scenario(
        "degenerate-delay-n1-1",
        m,
        DelayLaw::Degenerate { value: 0.125 },
        Experiment::WassersteinGap(Sweep {
            ns: doubling(8, 256),
            reps: 100,
            partition_level: None,
            regime: Some(Regime::DegenerateDelta),
            checks: vec![check("wasserstein_gap", SlopeCheck::Band { target: -0.5, tol: 0.25 })],
        }),
    );
    cfg.solver.particles = 4096;
    cfg
}

fn two_atom() -> ScenarioConfig {
    let m = nonlinear(1, 0.5, 0.025, 0.2);
    scenario(
        "two-atom",
        m,
        DelayLaw::Discrete { atoms: vec![0.05, 0.15], probs: vec![0.4, 0.6], support: None },
        Experiment::StateGap(Sweep {
            ns: doubling(8, 256),
            reps: 100,
            partition_level: None,
            regime: Some(Regime::DiscreteDelta),
            checks: vec![check("follower_state_gap", SlopeCheck::AtMost { bound: -0.25 })],
        }),
    )
}

fn uniform_delay() -> ScenarioConfig {
    let m = nonlinear(1, 0.5, 0.025, 0.2);
    // General regime with q = 6: exponent 4/7 on f(N-1), so slope -2/7.
    let bound = -2.0 / 7.0 + 0.25;
    scenario(
        "uniform-delay",
        m,
        DelayLaw::Uniform { low: 0.05, high: 0.2 },
        Experiment::StateGap(Sweep {
            ns: doubling(8, 128),
            reps: 100,
            partition_level: None,
            regime: Some(Regime::General),
            checks: vec![check("follower_state_gap", SlopeCheck::AtMost { bound })],
        }),
    )
}

fn control_free_sigma0() -> ScenarioConfig {
    let mut m = base_model(1, 1.0, 1.0 / 128.0, 0.25);
    m.leader_initial = LeaderInitial::ScaledBrownian { start: vec![0.0], volatility: 1.0 };
    m.coefficients.leader.diffusion = vec![Term::new(1.0, Atom::One)];
    m.coefficients.follower.diffusion = vec![Term::new(1.0, Atom::Delayed)];
    m.follower_initial = FollowerInitial::Constant { value: vec![0.0] };
    let h = m.step;
    let mut cfg = scenario(
        "control-free-sigma0",
        m,
        DelayLaw::Degenerate { value: 0.0 },
        Experiment::Holder {
            deltas: [0.0, 1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|s| s * h).collect(),
            reps: 200,
            leader_paths: 4,
            check: Some(SlopeCheck::Band { target: 1.0, tol: 0.2 }),
        },
    );
    cfg.solver.particles = 100;
    cfg
}

fn linear_model() -> ModelSpec {
    let mut m = base_model(1, 0.5, 1.0 / 32.0, 0.25);
    m.coefficients.family = Family::LinearInMeasure;
    m.coefficients.leader = PlayerCoefficients {
        drift: vec![Term::new(0.4, Atom::Mean), Term::new(-0.3, Atom::State)],
        diffusion: vec![Term::new(0.3, Atom::One)],
    };
    m.coefficients.follower = PlayerCoefficients {
        drift: vec![
            Term::new(0.5, Atom::Mean),
            Term::new(0.5, Atom::TanhKernel),
            Term::new(-0.5, Atom::State),
            Term::new(0.3, Atom::Delayed),
        ],
        diffusion: vec![Term::new(0.2, Atom::One)],
    };
    m.costs = CostSet {
        leader_running: vec![CostTerm::new(1.0, CostAtom::MeanSq)],
        leader_terminal: vec![CostTerm::new(1.0, CostAtom::StateSq)],
        follower_running: vec![CostTerm::new(1.0, CostAtom::StateMinusMeanSq)],
        follower_terminal: vec![CostTerm::new(1.0, CostAtom::StateMinusDelayedSq)],
    };
    m
}

fn linear_in_measure() -> ScenarioConfig {
    scenario(
        "linear-in-measure",
        linear_model(),
        DelayLaw::Degenerate { value: 0.125 },
        Experiment::CostGap(Sweep {
            ns: doubling(8, 256),
            reps: 100,
            partition_level: None,
            regime: Some(Regime::LinearInMeasure),
            checks: vec![
                check("follower_state_gap", SlopeCheck::Band { target: -1.0, tol: 0.25 }),
                check("follower_cost_gap", SlopeCheck::Band { target: -0.5, tol: 0.25 }),
            ],
        }),
    )
}

fn eta_orthogonality() -> ScenarioConfig {
    let mut cfg = scenario(
        "eta-orthogonality",
        linear_model(),
        DelayLaw::Degenerate { value: 0.125 },
        Experiment::EtaOrthogonality { n: 64, blocks: 20, sets: 500, step: 8, band: (0.7, 1.3) },
    );
    cfg.solver.particles = 2048;
    cfg
}

/// Constant deviation used by the `epsilon-nash` preset.
pub const EPSILON_NASH_C: f64 = 0.7;

fn epsilon_nash() -> ScenarioConfig {
    let mut m = nonlinear(1, 0.5, 1.0 / 32.0, 0.25);
    m.coefficients.follower.drift.push(Term::new(1.0, Atom::Control));
    m.costs.follower_running = vec![CostTerm::new(1.0, CostAtom::ControlSq)];
    let c = EPSILON_NASH_C;
    let deviation = |terms: Vec<PolicyTerm>| PolicySet { follower: terms, ..PolicySet::zero() };
    scenario(
        "epsilon-nash",
        m.clone(),
        DelayLaw::Degenerate { value: 0.125 },
        Experiment::EpsilonNash {
            n: 16,
            reps: 200,
            library: vec![deviation(vec![]), deviation(vec![PolicyTerm::new(c, PolicyAtom::One)])],
            leader_library: vec![],
            caps: NormCaps { kappa: 10.0, gamma: 10.0 },
            max_epsilon: Some(0.0),
            expected: vec![ExpectedImprovement { index: 1, improvement: -c * c * m.horizon, sigmas: 3.0 }],
        },
    )
}

fn empirical_rate(n1: usize) -> ScenarioConfig {
    let target = if n1 <= 4 { -0.5 } else { -2.0 / n1 as f64 };
    let quantity = if n1 == 4 { "empirical_rate_over_log" } else { "empirical_rate" };
    scenario(
        &format!("empirical-rate-n1-{n1}"),
        base_model(n1, 1.0, 0.25, 0.25),
        DelayLaw::Degenerate { value: 0.0 },
        Experiment::EmpiricalRate(Sweep {
            ns: doubling(50, 3200),
            reps: 200,
            partition_level: None,
            regime: None,
            checks: vec![check(quantity, SlopeCheck::Band { target, tol: 0.15 })],
        }),
    )
}
