use super::*;
use crate::dynamics::{
    Atom, CoefficientSet, CostAtom, CostSet, CostTerm, FollowerInitial, LeaderInitial, PlayerCoefficients,
    PolicyAtom, PolicyTerm, Term,
};
use crate::seed::rng_from;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_model() -> ModelSpec {
    ModelSpec {
        n0: 1,
        n1: 1,
        horizon: 0.5,
        step: 1.0 / 16.0,
        max_delay: 0.125,
        coefficients: CoefficientSet {
            family: Family::SmoothNonlinear,
            lipschitz: 2.0,
            leader: PlayerCoefficients {
                drift: vec![Term::new(0.5, Atom::TanhMean), Term::new(0.3, Atom::Control)],
                diffusion: vec![Term::new(0.3, Atom::One)],
            },
            follower: PlayerCoefficients {
                drift: vec![Term::new(1.0, Atom::TanhMeanMinusState), Term::new(0.5, Atom::Control)],
                diffusion: vec![Term::new(0.5, Atom::One)],
            },
        },
        costs: CostSet::default(),
        leader_initial: LeaderInitial::Constant { value: vec![0.2] },
        follower_initial: FollowerInitial::Gaussian { mean: vec![0.5], std: 1.0 },
        q: 6.0,
    }
}

fn law() -> DelayLaw {
    DelayLaw::Discrete { atoms: vec![0.0, 0.125], probs: vec![0.5, 0.5], support: None }
}

fn plan() -> ExperimentPlan {
    ExperimentPlan {
        scenario: "unit".into(),
        ns: vec![4, 8, 16],
        reps: 50,
        solver: SolverOptions { particles: 100, ..Default::default() },
        seed: 3,
        partition_level: None,
    }
}

fn policies() -> PolicySet {
    PolicySet {
        leader: vec![PolicyTerm::new(-0.5, PolicyAtom::State)],
        follower: vec![PolicyTerm::new(-0.5, PolicyAtom::State), PolicyTerm::new(0.2, PolicyAtom::Delayed)],
        holder_l: 0.0,
    }
}

#[test]
fn predicted_exponent_table() {
    let p = predicted_exponent(5, 6.0, Regime::General, Quantity::SquaredStateGap).unwrap();
    assert!((p.exponent - 4.0 / 7.0).abs() < 1e-15);
    assert!((p.n_slope(5) + 8.0 / 35.0).abs() < 1e-15);
    let p = predicted_exponent(3, 6.0, Regime::LinearInMeasure, Quantity::SquaredStateGap).unwrap();
    assert_eq!((p.exponent, p.base, p.n_slope(3)), (1.0, RateBase::InverseN, -1.0));
    let p = predicted_exponent(3, 5.0, Regime::DiscreteDelta, Quantity::CostGap).unwrap();
    assert_eq!((p.exponent, p.base, p.n_slope(3)), (0.5, RateBase::F, -0.25));
    let p = predicted_exponent(1, 6.0, Regime::General, Quantity::CostGap).unwrap();
    assert!((p.exponent - 4.0 / 14.0).abs() < 1e-15);
    assert_eq!(predicted_exponent(2, 3.0, Regime::Sigma0ControlFree, Quantity::CostGap).unwrap().exponent, 1.0 / 3.0);
    assert!(predicted_exponent(1, 4.0, Regime::General, Quantity::SquaredStateGap).is_err());
}

#[test]
fn slope_fits() {
    let ns = [50, 100, 200, 400, 800, 1600, 3200];
    let f = fit_slope(&ns, &ns.map(|n| 2.0 / n as f64)).unwrap();
    assert!((f.slope + 1.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    let f = fit_slope(&ns, &ns.map(|n| 2.0 / (n as f64).sqrt())).unwrap();
    assert!((f.slope + 0.5).abs() < 1e-12);

    let mut rng = rng_from(4);
    let mut inside = 0;
    for _ in 0..200 {
        let v = ns.map(|n| (n as f64).powf(-0.5) * (0.1 * rng.sample::<f64, _>(StandardNormal)).exp());
        let f = fit_slope(&ns, &v).unwrap();
        if (f.slope + 0.5).abs() <= 3.0 * f.stderr {
            inside += 1;
        }
    }
    assert!(inside >= 190, "{inside}");
    assert!(fit_slope(&ns[..2], &[1.0, 2.0]).is_err());
    assert!(fit_slope(&ns[..3], &[1.0, 0.0, 2.0]).is_err());
}

#[test]
fn verdicts() {
    let s = GapSeries::new("x", [4, 8, 16].iter().map(|&n| GapPoint { n, mean: 1.0 / n as f64, stderr: 0.0, count: 1 }).collect());
    assert_eq!(judge(&s, Some(SlopeCheck::Band { target: -1.0, tol: 0.1 })), Verdict::Pass);
    assert_eq!(judge(&s, Some(SlopeCheck::AtMost { bound: -1.5 })), Verdict::Fail);
    assert_eq!(judge(&s, None), Verdict::NotAsserted);
    let z = GapSeries::new("z", [4, 8, 16].iter().map(|&n| GapPoint { n, mean: 0.0, stderr: 0.0, count: 1 }).collect());
    assert!(z.fit.is_none());
    assert_eq!(judge(&z, Some(SlopeCheck::AtMost { bound: 0.0 })), Verdict::Undefined);
}

#[test]
fn plan_validation() {
    let mut p = plan();
    p.reps = 49;
    assert!(p.validate().is_err());
    let mut p = plan();
    p.ns = vec![8, 4];
    assert!(p.validate().is_err());
    let mut p = plan();
    p.ns = vec![3, 8, 16];
    assert!(p.validate().is_err());
}

#[test]
fn no_interaction_gives_zero_gaps() {
    let mut m = small_model();
    m.coefficients.leader.drift = vec![Term::new(-0.5, Atom::State)];
    m.coefficients.follower.drift = vec![Term::new(-1.0, Atom::State), Term::new(0.5, Atom::SinDelayed)];
    m.costs.follower_running = vec![CostTerm::new(1.0, CostAtom::StateSq)];
    let p = PolicySet { follower: vec![PolicyTerm::new(-0.5, PolicyAtom::State)], ..PolicySet::zero() };
    let r = cost_gap_experiment(&m, &p, &law(), &plan()).unwrap();
    for s in &r.series {
        assert!(s.points.iter().all(|p| p.mean == 0.0), "{}", s.quantity);
        assert!(s.fit.is_none());
    }
}

#[test]
fn zero_costs_give_zero_cost_gaps() {
    let r = cost_gap_experiment(&small_model(), &policies(), &law(), &plan()).unwrap();
    for q in ["leader_cost_gap", "follower_cost_gap"] {
        assert!(r.series(q).unwrap().points.iter().all(|p| p.mean == 0.0));
    }
    assert!(r.series("follower_state_gap").unwrap().points.iter().all(|p| p.mean > 0.0));
}

#[test]
fn experiments_are_reproducible_across_thread_counts() {
    let m = small_model();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| state_gap_experiment(&m, &policies(), &law(), &plan()).unwrap())
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert!(a.series.iter().all(|s| s.points.iter().all(|p| p.mean >= 0.0)));
}

#[test]
fn fixed_point_failures_invalidate_the_experiment() {
    let mut p = plan();
    p.solver = SolverOptions { particles: 100, tol: 0.0, max_iter: 1, ..Default::default() };
    let e = state_gap_experiment(&small_model(), &policies(), &law(), &p);
    assert!(matches!(e, Err(Error::ExperimentInvalid(_))), "{e:?}");
}

#[test]
fn dirac_closed_form_matches_lp() {
    let mut rng = rng_from(5);
    for _ in 0..50 {
        let dim = rng.random_range(1..4);
        let n = rng.random_range(1..9);
        let pts: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let nu = DiscreteMeasure::new(dim, pts, w).unwrap();
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lp = w2_exact_lp(&DiscreteMeasure::dirac(&x).unwrap(), &nu).unwrap().0.powi(2);
        let cf = w2_squared_dirac(&x, &nu).unwrap();
        let mean = nu.mean();
        let m2: f64 = nu.iter().map(|(y, w)| w * y.iter().map(|v| v * v).sum::<f64>()).sum();
        let expanded = x.iter().map(|v| v * v).sum::<f64>() - 2.0 * x.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>() + m2;
        assert!((lp - cf).abs() < 1e-9 && (cf - expanded).abs() < 1e-9);
        // A single follower against z is the same quantity.
        if dim == 1 {
            assert!((w2_sq_cloud_vs(1, &x, &nu, None, 512).unwrap() - cf).abs() < 1e-12);
        }
    }
}

#[test]
fn synchronous_coupling_dominance_and_leave_one_out() {
    let m = small_model();
    let p = plan();
    let partition = experiment_partition(&m, &law(), &p).unwrap();
    for r in 0..5 {
        let seeds = SeedRecord::new(9, r);
        let (flow, _) = solve_conditional_law(&m, &policies(), &partition, seeds, &p.solver).unwrap();
        let (leader, draws) = follower_draws_for(&m, &law(), seeds, 12).unwrap();
        let pair = simulate_limit_pair(&m, &policies(), &flow, seeds, &leader, &draws).unwrap();
        let engine = Engine::new(&m).unwrap();
        let mode = ControlMode::Prescribed { leader: &pair.leader_controls, followers: &pair.follower_controls };
        let y = engine.run_nplayer(&policies(), &leader, &draws, seeds, mode, None).unwrap();
        let (w, g) = coupling_dominance(&y.follower_paths, &pair.follower_paths, 1, m.step).unwrap();
        assert!(w <= g + 1e-10, "{w} > {g}");
        assert!(g > 0.0);
    }
    let mut rng = rng_from(6);
    for _ in 0..30 {
        let dim = rng.random_range(1..4);
        let n = rng.random_range(2..12);
        let cloud: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let i = rng.random_range(0..n);
        let (lhs, rhs) = leave_one_out_bound(&cloud, dim, i).unwrap();
        assert!(lhs <= rhs + 1e-10, "{lhs} > {rhs}");
    }
    assert!(leave_one_out_bound(&[1.0], 1, 0).is_err());
}

#[test]
fn wasserstein_curve_runs_and_decreases_overall() {
    let mut p = plan();
    p.ns = vec![4, 16, 64];
    let r = wasserstein_gap_curve(&small_model(), &policies(), &law(), &p).unwrap();
    let s = r.series("wasserstein_gap").unwrap();
    assert!(s.points.iter().all(|q| q.mean > 0.0));
    assert!(s.points[2].mean < s.points[0].mean);
}

#[test]
fn empirical_rate_sanity() {
    let s = empirical_rate_experiment(3, &[20, 80, 320], 20, 1).unwrap();
    assert!(s.points.windows(2).all(|w| w[1].mean < w[0].mean));
    assert!(empirical_rate_experiment(1, &[20, 10], 20, 1).is_err());
}

fn convex_model() -> ModelSpec {
    let mut m = small_model();
    m.costs = CostSet {
        follower_running: vec![CostTerm::new(1.0, CostAtom::ControlSq)],
        leader_running: vec![CostTerm::new(1.0, CostAtom::StateSq), CostTerm::new(0.1, CostAtom::ControlSq)],
        ..Default::default()
    };
    m
}

#[test]
fn epsilon_nash_examples() {
    let m = convex_model();
    let profile = PolicySet { follower: vec![], ..policies() };
    let caps = NormCaps { kappa: 10.0, gamma: 10.0 };
    let r = epsilon_nash_certify(&m, &profile, &[profile.clone()], &[profile.clone()], &law(), 8, 40, 1, caps).unwrap();
    assert_eq!(r.epsilon_hat, 0.0);
    assert_eq!(r.epsilon2_hat, Some(0.0));
    assert!(r.common_random_numbers);

    let c = 0.7;
    let constant = PolicySet { follower: vec![PolicyTerm::new(c, PolicyAtom::One)], ..profile.clone() };
    let r = epsilon_nash_certify(&m, &profile, &[constant.clone()], &[], &law(), 8, 40, 1, caps).unwrap();
    assert_eq!(r.epsilon_hat, 0.0);
    let d = &r.deviations[0];
    let expected = c * c * m.horizon;
    assert!((-d.improvement_mean - expected).abs() <= 3.0 * d.improvement_stderr + 1e-12, "{d:?}");

    let tiny = PolicySet { follower: vec![PolicyTerm::new(1e-6, PolicyAtom::State)], ..profile.clone() };
    let r = epsilon_nash_certify(&m, &profile, &[tiny], &[], &law(), 8, 40, 1, caps).unwrap();
    assert!(r.epsilon_hat <= 1e-9, "{r:?}");

    let tight = NormCaps { kappa: 0.1, gamma: 10.0 };
    let e = epsilon_nash_certify(&m, &profile, &[constant], &[], &law(), 8, 40, 1, tight).unwrap_err();
    assert!(e.to_string().contains("deviation 0"), "{e}");
    assert!(epsilon_nash_certify(&m, &profile, &[profile.clone()], &[], &law(), 65, 40, 1, caps).is_err());
    assert!(epsilon_nash_certify(&m, &profile, &[], &[], &law(), 8, 40, 1, caps).is_err());
}

#[test]
fn eta_experiment_runs_on_linear_models_only() {
    let mut m = small_model();
    let solver = SolverOptions { particles: 200, ..Default::default() };
    assert!(eta_orthogonality_experiment(&m, &policies(), &law(), 8, 2, 2, 4, &solver, 1).is_err());
    m.coefficients.family = Family::LinearInMeasure;
    m.coefficients.leader.drift = vec![Term::new(0.5, Atom::Mean)];
    m.coefficients.follower.drift = vec![Term::new(1.0, Atom::TanhKernel), Term::new(-0.5, Atom::State)];
    let r = eta_orthogonality_experiment(&m, &policies(), &law(), 8, 4, 50, 4, &solver, 1).unwrap();
    assert_eq!(r.replications, 200);
    assert!(r.ratio.is_finite() && r.ratio > 0.3 && r.ratio < 3.0, "{r:?}");
}
