use super::*;
use crate::seed::rng_from;
use rand::Rng;
use rand_distr::StandardNormal;

fn base_model(n0: usize, n1: usize, b: f64, t: f64, h: f64) -> ModelSpec {
    ModelSpec {
        n0,
        n1,
        horizon: t,
        step: h,
        max_delay: b,
        coefficients: CoefficientSet {
            family: Family::SmoothNonlinear,
            lipschitz: 1.0,
            leader: PlayerCoefficients::default(),
            follower: PlayerCoefficients::default(),
        },
        costs: CostSet::default(),
        leader_initial: LeaderInitial::Constant { value: vec![0.0; n0] },
        follower_initial: FollowerInitial::Constant { value: vec![0.0; n1] },
        q: 6.0,
    }
}

fn interacting_model() -> ModelSpec {
    let mut m = base_model(1, 1, 0.25, 1.0, 1.0 / 32.0);
    m.coefficients.lipschitz = 5.0;
    m.coefficients.leader = PlayerCoefficients {
        drift: vec![Term::new(-0.5, Atom::State), Term::new(0.5, Atom::TanhMean), Term::new(1.0, Atom::Control)],
        diffusion: vec![Term::new(0.3, Atom::One)],
    };
    m.coefficients.follower = PlayerCoefficients {
        drift: vec![
            Term::new(1.0, Atom::TanhMeanMinusState),
            Term::new(0.5, Atom::SinDelayed),
            Term::new(0.5, Atom::Control),
        ],
        diffusion: vec![Term::new(0.4, Atom::One), Term::new(0.2, Atom::SinState)],
    };
    m.leader_initial = LeaderInitial::ScaledBrownian { start: vec![0.2], volatility: 0.3 };
    m.follower_initial = FollowerInitial::Gaussian { mean: vec![0.0], std: 1.0 };
    m
}

fn feedback() -> PolicySet {
    PolicySet {
        leader: vec![PolicyTerm::new(-0.2, PolicyAtom::State)],
        follower: vec![PolicyTerm::new(-0.3, PolicyAtom::State), PolicyTerm::new(0.1, PolicyAtom::Mean)],
        holder_l: 0.0,
    }
}

fn two_atoms() -> DelayLaw {
    DelayLaw::Discrete { atoms: vec![0.0, 0.25], probs: vec![0.5, 0.5], support: None }
}

#[test]
fn zero_coefficients_freeze_everything() {
    let mut m = base_model(2, 1, 0.5, 1.0, 0.1);
    m.leader_initial = LeaderInitial::ScaledBrownian { start: vec![1.0, -1.0], volatility: 1.0 };
    m.follower_initial = FollowerInitial::Gaussian { mean: vec![0.0], std: 1.0 };
    let b = simulate_nplayer(&m, &PolicySet::zero(), 5, &DelayLaw::Degenerate { value: 0.2 }, SeedRecord::new(1, 0)).unwrap();
    let x00 = b.leader_at(b.grid.neg_steps()).to_vec();
    for j in b.grid.neg_steps()..=b.grid.total_steps() {
        assert_eq!(b.leader_at(j), &x00[..]);
    }
    for i in 0..5 {
        let p = &b.follower_paths[i];
        assert!(p.iter().all(|x| *x == p[0]));
    }
}

#[test]
fn brownian_follower_variance() {
    let mut m = base_model(1, 1, 0.0, 1.0, 0.125);
    m.coefficients.follower.diffusion = vec![Term::new(1.0, Atom::One)];
    let law = DelayLaw::Degenerate { value: 0.0 };
    let reps = 10_000;
    let vals: Vec<f64> = (0..reps)
        .map(|r| {
            let b = simulate_nplayer(&m, &PolicySet::zero(), 2, &law, SeedRecord::new(3, r)).unwrap();
            b.follower_at(0, b.grid.pos_steps())[0]
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    assert!((var - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn pure_drift_follows_time() {
    let mut m = base_model(1, 1, 0.0, 1.0, 0.125);
    m.coefficients.follower.drift = vec![Term::new(1.0, Atom::One)];
    let b = simulate_nplayer(&m, &PolicySet::zero(), 3, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(0, 0)).unwrap();
    for k in 0..=8 {
        assert_eq!(b.follower_at(1, k)[0], k as f64 * 0.125);
    }
}

#[test]
fn deterministic_given_seed() {
    let m = interacting_model();
    let a = simulate_nplayer(&m, &feedback(), 16, &two_atoms(), SeedRecord::new(11, 4)).unwrap();
    let b = simulate_nplayer(&m, &feedback(), 16, &two_atoms(), SeedRecord::new(11, 4)).unwrap();
    assert_eq!(a, b);
    let c = simulate_nplayer(&m, &feedback(), 16, &two_atoms(), SeedRecord::new(11, 5)).unwrap();
    assert_ne!(a.follower_paths, c.follower_paths);
}

#[test]
fn relabelling_permutes_followers_exactly() {
    let m = interacting_model();
    let grid = m.grid().unwrap();
    let seeds = SeedRecord::new(5, 2);
    let ids: Vec<u64> = (0..9).collect();
    let perm: Vec<usize> = vec![3, 7, 0, 8, 1, 5, 2, 6, 4];
    let leader = LeaderDraw::sample(&m, &grid, seeds);
    let draws = sample_followers(&m, &grid, &two_atoms(), seeds, &ids);
    let permuted: Vec<FollowerDraw> = perm.iter().map(|&p| draws[p].clone()).collect();
    let a = simulate_nplayer_with(&m, &feedback(), &leader, &draws, seeds, ControlMode::Feedback, None).unwrap();
    let b = simulate_nplayer_with(&m, &feedback(), &leader, &permuted, seeds, ControlMode::Feedback, None).unwrap();
    assert_eq!(a.leader_path, b.leader_path);
    for (slot, &p) in perm.iter().enumerate() {
        assert_eq!(b.follower_paths[slot], a.follower_paths[p]);
        assert_eq!(b.follower_ids[slot], p as u64);
    }
}

#[test]
fn prescribed_replay_reproduces_feedback_run() {
    let m = interacting_model();
    let a = simulate_nplayer(&m, &feedback(), 6, &two_atoms(), SeedRecord::new(2, 0)).unwrap();
    let grid = m.grid().unwrap();
    let seeds = SeedRecord::new(2, 0);
    let leader = LeaderDraw::sample(&m, &grid, seeds);
    let draws = sample_followers(&m, &grid, &two_atoms(), seeds, &(0..6).collect::<Vec<_>>());
    let mode = ControlMode::Prescribed { leader: &a.leader_controls, followers: &a.follower_controls };
    let b = simulate_nplayer_with(&m, &PolicySet::zero(), &leader, &draws, seeds, mode, None).unwrap();
    assert_eq!(a.follower_paths, b.follower_paths);
    assert_eq!(a.leader_path, b.leader_path);
}

#[test]
fn explosion_is_reported() {
    let mut m = base_model(1, 1, 0.0, 100.0, 0.5);
    m.coefficients.lipschitz = 1e3;
    m.coefficients.follower.drift = vec![Term::new(1e3, Atom::State)];
    m.follower_initial = FollowerInitial::Constant { value: vec![1.0] };
    let e = simulate_nplayer(&m, &PolicySet::zero(), 2, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(0, 0));
    assert!(matches!(e, Err(crate::Error::SimulationDiverged { .. })), "{e:?}");
    let small = simulate_nplayer(&base_model(1, 1, 0.0, 1.0, 0.5), &PolicySet::zero(), 1, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(0, 0));
    assert!(matches!(small, Err(crate::Error::Validation(_))));
}

#[test]
fn moment_bound_is_stable_under_refinement() {
    let law = two_atoms();
    let sup_sq = |h: f64| {
        let mut m = interacting_model();
        m.step = h;
        let reps = 1000;
        let mut acc = 0.0;
        for r in 0..reps {
            let b = simulate_nplayer(&m, &feedback(), 4, &law, SeedRecord::new(21, r)).unwrap();
            let lead = b.leader_path.iter().map(|x| x * x).fold(0.0, f64::max);
            let foll = b.follower_paths[0].iter().map(|x| x * x).fold(0.0, f64::max);
            acc += lead.max(foll);
        }
        acc / reps as f64
    };
    let coarse = sup_sq(1.0 / 16.0);
    let fine = sup_sq(1.0 / 32.0);
    assert!(coarse.is_finite() && fine.is_finite());
    assert!((coarse / fine - 1.0).abs() < 0.1, "{coarse} vs {fine}");
}

/// Coarsens standard-normal increments by summing pairs.
fn coarsen(noise: &[f64], dim: usize) -> Vec<f64> {
    let steps = noise.len() / dim;
    (0..steps / 2)
        .flat_map(|k| (0..dim).map(move |c| (noise[2 * k * dim + c] + noise[(2 * k + 1) * dim + c]) / 2f64.sqrt()))
        .collect()
}

#[test]
fn strong_error_has_order_one_half() {
    // Multiplicative noise so the scheme is genuinely of strong order 1/2.
    let mut m = interacting_model();
    m.leader_initial = LeaderInitial::Constant { value: vec![0.2] };
    m.coefficients.follower.diffusion = vec![Term::new(0.2, Atom::One), Term::new(1.0, Atom::SinState)];
    let law = two_atoms();
    let fine_h = 1.0 / 512.0;
    let levels = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let reps = 300;
    let n = 4;
    let mut err = [0.0f64; 3];
    let mut rng = rng_from(17);
    for r in 0..reps {
        m.step = fine_h;
        let grid = m.grid().unwrap();
        let seeds = SeedRecord::new(99, r);
        let mut leader = LeaderDraw::sample(&m, &grid, seeds);
        leader.noise = (0..grid.pos_steps()).map(|_| rng.sample(StandardNormal)).collect();
        let mut draws = sample_followers(&m, &grid, &law, seeds, &(0..n as u64).collect::<Vec<_>>());
        for d in draws.iter_mut() {
            d.noise = (0..grid.pos_steps()).map(|_| rng.sample(StandardNormal)).collect();
        }
        let fine = simulate_nplayer_with(&m, &feedback(), &leader, &draws, seeds, ControlMode::Feedback, None).unwrap();
        let mut ld = leader.clone();
        let mut fd = draws.clone();
        let mut ratio = 1;
        let mut h = fine_h;
        let mut level = 3;
        while level > 0 {
            ld.noise = coarsen(&ld.noise, 1);
            for d in fd.iter_mut() {
                d.noise = coarsen(&d.noise, 1);
            }
            ratio *= 2;
            h *= 2.0;
            if levels.contains(&h) {
                level -= 1;
                m.step = h;
                let g = m.grid().unwrap();
                ld.initial = vec![0.2; g.neg_steps() + 1];
                for (d, f) in fd.iter_mut().zip(&draws) {
                    d.delay_steps = g.delay_steps(f.delay);
                }
                let coarse = simulate_nplayer_with(&m, &feedback(), &ld, &fd, seeds, ControlMode::Feedback, None).unwrap();
                let mut worst = 0.0f64;
                for k in 0..=g.pos_steps() {
                    worst = worst.max((coarse.follower_at(0, k)[0] - fine.follower_at(0, k * ratio)[0]).powi(2));
                }
                err[level] += worst / reps as f64;
            }
        }
    }
    let x: Vec<f64> = levels.iter().map(|h| h.ln()).collect();
    let y: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    assert!((slope - 1.0).abs() <= 0.3, "slope {slope}, errors {err:?}");
}

#[test]
fn rectangle_rule_costs() {
    let mut m = base_model(1, 1, 0.0, 2.0, 0.125);
    m.costs.leader_terminal = vec![CostTerm::new(1.0, CostAtom::StateSq)];
    let b = simulate_nplayer(&m, &PolicySet::zero(), 3, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(0, 0)).unwrap();
    assert_eq!(evaluate_costs_nplayer(&b, &m).unwrap().0, 0.0);

    m.costs.leader_terminal.clear();
    m.costs.leader_running = vec![CostTerm::new(1.0, CostAtom::One)];
    assert_eq!(evaluate_costs_nplayer(&b, &m).unwrap().0, 2.0);

    let mut d = base_model(1, 1, 0.0, 2.0, 0.125);
    d.coefficients.follower.drift = vec![Term::new(1.0, Atom::One)];
    d.costs.follower_running = vec![CostTerm::new(1.0, CostAtom::StateSq)];
    let b = simulate_nplayer(&d, &PolicySet::zero(), 3, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(0, 0)).unwrap();
    let (_, ji) = evaluate_costs_nplayer(&b, &d).unwrap();
    let exact = 8.0 / 3.0;
    assert!(ji.iter().all(|j| (j - exact).abs() <= 0.125 * 4.0), "{ji:?}");
}

#[test]
fn leave_one_out_cost_features() {
    let mut m = base_model(1, 1, 0.0, 1.0, 0.5);
    m.follower_initial = FollowerInitial::Gaussian { mean: vec![0.0], std: 1.0 };
    m.costs.follower_terminal = vec![CostTerm::new(1.0, CostAtom::MeanSq)];
    m.costs.leader_terminal = vec![CostTerm::new(1.0, CostAtom::MeanSq)];
    let b = simulate_nplayer(&m, &PolicySet::zero(), 3, &DelayLaw::Degenerate { value: 0.0 }, SeedRecord::new(4, 0)).unwrap();
    let x: Vec<f64> = (0..3).map(|i| b.follower_at(i, 2)[0]).collect();
    let (j0, ji) = evaluate_costs_nplayer(&b, &m).unwrap();
    assert!((j0 - ((x[0] + x[1] + x[2]) / 3.0).powi(2)).abs() < 1e-14);
    assert!((ji[0] - ((x[1] + x[2]) / 2.0).powi(2)).abs() < 1e-14);
}

#[test]
fn probe_examples() {
    let mut c = base_model(1, 1, 0.0, 1.0, 0.5).coefficients;
    c.follower.drift = vec![Term::new(2.5, Atom::One)];
    assert_eq!(lipschitz_probe(&c, CoefficientRole::FollowerDrift, 1, 1, 200, 2.0, 1).unwrap(), 0.0);

    c.follower.drift = vec![Term::new(-1.7, Atom::State)];
    let r = lipschitz_probe(&c, CoefficientRole::FollowerDrift, 1, 1, 200, 2.0, 1).unwrap();
    assert!((r - 1.7).abs() < 1e-9, "{r}");

    c.family = Family::LinearInMeasure;
    c.follower.drift = vec![Term::new(1.0, Atom::TanhKernel)];
    let r = lipschitz_probe(&c, CoefficientRole::FollowerDrift, 1, 1, 500, 3.0, 2).unwrap();
    assert!(r <= 1.0 + 1e-12, "{r}");

    let m = interacting_model();
    for role in CoefficientRole::ALL {
        let r = lipschitz_probe(&m.coefficients, role, 1, 1, 500, 3.0, 3).unwrap();
        assert!(r <= m.coefficients.lipschitz * 1.01, "{role:?}: {r}");
    }
    assert!(lipschitz_probe(&c, CoefficientRole::FollowerDrift, 1, 1, 0, 1.0, 0).is_err());
}

#[test]
fn probe_respects_bound_in_higher_dimensions() {
    let mut m = interacting_model();
    m.n0 = 2;
    m.n1 = 3;
    m.coefficients.leader.drift.push(Term::new(0.7, Atom::RootSecondMoment));
    m.coefficients.lipschitz = m.coefficients.lipschitz_bound(2, 3);
    for role in CoefficientRole::ALL {
        let r = lipschitz_probe(&m.coefficients, role, 2, 3, 1000, 2.0, 8).unwrap();
        assert!(r <= m.coefficients.lipschitz * 1.01, "{role:?}: {r}");
    }
}
