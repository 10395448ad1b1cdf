use super::*;
use crate::seed::rng_from;
use proptest::prelude::*;
use rand::Rng;

fn m1(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(1, points.to_vec(), weights.to_vec()).unwrap()
}

/// Brute-force optimum over all permutations for equal-size uniform clouds.
fn permutation_oracle(dim: usize, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / dim;
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    fn heap(k: usize, perm: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if k == 1 {
            f(perm);
            return;
        }
        for i in 0..k {
            heap(k - 1, perm, f);
            if k % 2 == 0 {
                perm.swap(i, k - 1);
            } else {
                perm.swap(0, k - 1);
            }
        }
    }
    heap(n, &mut perm, &mut |p| {
        let c: f64 = (0..n)
            .map(|i| sq_dist(&a[i * dim..(i + 1) * dim], &b[p[i] * dim..(p[i] + 1) * dim]))
            .sum();
        best = best.min(c);
    });
    best / n as f64
}

fn random_measure<R: Rng>(rng: &mut R, dim: usize, max_atoms: usize) -> DiscreteMeasure {
    let n = rng.random_range(1..=max_atoms);
    let points: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / s).collect();
    let head: f64 = weights[..n - 1].iter().sum();
    weights[n - 1] = 1.0 - head;
    DiscreteMeasure::new(dim, points, weights).unwrap()
}

#[test]
fn rejects_bad_measures() {
    assert!(matches!(
        DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.6]),
        Err(Error::Validation(_))
    ));
    assert!(matches!(
        DiscreteMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]),
        Err(Error::Validation(_))
    ));
    assert!(matches!(
        DiscreteMeasure::new(2, vec![0.0, 1.0, 2.0], vec![0.5, 0.5]),
        Err(Error::Dimension(_))
    ));
    assert!(matches!(
        DiscreteMeasure::new(1, vec![f64::NAN], vec![1.0]),
        Err(Error::Validation(_))
    ));
    assert!(matches!(
        DiscreteMeasure::new(0, vec![], vec![1.0]),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn w2_1d_examples() {
    let d0 = m1(&[0.0], &[1.0]);
    let d1 = m1(&[1.0], &[1.0]);
    assert_eq!(w2_exact_1d(&d0, &d1).unwrap(), 1.0);
    // Only one coupling exists between a two-atom measure and a Dirac:
    // mass 1/2 moves 1 to the left, mass 1/2 moves 1 to the right.
    let u02 = m1(&[0.0, 2.0], &[0.5, 0.5]);
    assert!((w2_exact_1d(&u02, &d1).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(w2_exact_1d(&u02, &u02).unwrap(), 0.0);
    let two_d = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
    assert!(matches!(w2_exact_1d(&two_d, &d0), Err(Error::Dimension(_))));
}

#[test]
fn lp_examples() {
    let a = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
    let b = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
    let (w, plan) = w2_exact_lp(&a, &b).unwrap();
    assert!((w - 5.0).abs() < 1e-14);
    assert_eq!(plan.entries().len(), 1);

    // Vertex plans: identity costs (1 + 1)/2 = 1, swap costs (2 + 2)/2 = 2.
    let mu = DiscreteMeasure::uniform(2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let nu = DiscreteMeasure::uniform(2, vec![0.0, 1.0, 1.0, 1.0]).unwrap();
    let (w, plan) = w2_exact_lp(&mu, &nu).unwrap();
    assert!((w - 1.0).abs() < 1e-14);
    assert!(plan.marginal_error() < 1e-12);
    assert!((plan.get(0, 0) - 0.5).abs() < 1e-15 && (plan.get(1, 1) - 0.5).abs() < 1e-15);
}

#[test]
fn lp_capacity_and_dimension_errors() {
    let mut rng = rng_from(3);
    let big = DiscreteMeasure::uniform(1, (0..20).map(|_| rng.random()).collect()).unwrap();
    let small = DiscreteMeasure::dirac(&[0.0]).unwrap();
    let err = w2_exact_lp_with(&big, &small, LpOptions { support_cap: 10 }).unwrap_err();
    assert_eq!(err, Error::Capacity { size: 20, cap: 10 });
    let plane = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
    assert!(matches!(w2_exact_lp(&plane, &small), Err(Error::Dimension(_))));
}

#[test]
fn lp_matches_quantile_coupling_on_random_lines() {
    let mut rng = rng_from(101);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let mu = random_measure(&mut rng, 1, 12);
        let nu = random_measure(&mut rng, 1, 12);
        let a = w2_exact_1d(&mu, &nu).unwrap();
        let (b, plan) = w2_exact_lp(&mu, &nu).unwrap();
        assert!(plan.marginal_error() < 1e-10);
        assert!((plan.cost() - b * b).abs() < 1e-12);
        worst = worst.max((a - b).abs());
    }
    assert!(worst < 1e-9, "max |1d - lp| = {worst}");
}

#[test]
fn lp_and_assignment_match_permutation_enumeration() {
    let mut rng = rng_from(7);
    for trial in 0..150 {
        let dim = 1 + trial % 3;
        let n = 1 + trial % 6;
        let a: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = permutation_oracle(dim, &a, &b);
        let mu = DiscreteMeasure::uniform(dim, a.clone()).unwrap();
        let nu = DiscreteMeasure::uniform(dim, b.clone()).unwrap();
        let (w, plan) = w2_exact_lp(&mu, &nu).unwrap();
        assert!((w * w - oracle).abs() < 1e-12, "lp trial {trial}");
        assert!(plan.marginal_error() < 1e-12);
        let asg = w2_squared_uniform(dim, &a, &b).unwrap();
        assert!((asg - oracle).abs() < 1e-12, "assignment trial {trial}");
    }
}

#[test]
fn assignment_agrees_with_lp_on_larger_clouds() {
    let mut rng = rng_from(8);
    for &(dim, n) in &[(2usize, 40usize), (3, 64), (6, 100)] {
        let a: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lp = {
            let (w, _) = w2_exact_lp(
                &DiscreteMeasure::uniform(dim, a.clone()).unwrap(),
                &DiscreteMeasure::uniform(dim, b.clone()).unwrap(),
            )
            .unwrap();
            w * w
        };
        let asg = w2_squared_uniform(dim, &a, &b).unwrap();
        assert!((lp - asg).abs() < 1e-10, "dim {dim}: lp {lp} vs assignment {asg}");
    }
}

#[test]
fn lp_handles_degenerate_duplicates() {
    // Repeated points and equal weights produce heavily degenerate bases.
    let pts = vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.5, 0.5];
    let mu = DiscreteMeasure::uniform(2, pts.clone()).unwrap();
    let (w, plan) = w2_exact_lp(&mu, &mu).unwrap();
    assert!(w.abs() < 1e-12);
    assert!(plan.marginal_error() < 1e-12);
}

#[test]
fn moment_examples() {
    let x = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
    for q in [1.0, 2.0, 5.5] {
        assert!((moment(&x, q).unwrap() - 5.0).abs() < 1e-12);
    }
    let pm = m1(&[-1.0, 1.0], &[0.5, 0.5]);
    assert!((moment(&pm, 2.0).unwrap() - 1.0).abs() < 1e-15);
    let u02 = m1(&[0.0, 2.0], &[0.5, 0.5]);
    assert!((moment(&u02, 2.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!(matches!(moment(&u02, 0.5), Err(Error::Parameter(_))));
}

#[test]
fn empirical_examples() {
    let e = empirical_from_samples(&[vec![0.0], vec![0.0], vec![1.0]]).unwrap();
    assert_eq!(e.len(), 3);
    assert_eq!(e.points(), &[0.0, 0.0, 1.0]);
    assert!(e.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-16));
    let single = empirical_from_samples(&[vec![2.5, -1.0]]).unwrap();
    assert_eq!(single, DiscreteMeasure::dirac(&[2.5, -1.0]).unwrap());
    assert!(matches!(empirical_from_samples(&[]), Err(Error::Validation(_))));

    let mut rng = rng_from(5);
    let samples: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let rms = (samples.iter().map(|s| s[0] * s[0] + s[1] * s[1]).sum::<f64>() / 50.0).sqrt();
    let e = empirical_from_samples(&samples).unwrap();
    assert!((moment(&e, 2.0).unwrap() - rms).abs() < 1e-12);
}

#[test]
fn mixture_examples() {
    let mut rng = rng_from(9);
    let mu = random_measure(&mut rng, 2, 5);
    assert_eq!(mixture(&[mu.clone()], &[1.0]).unwrap(), mu);
    let d0 = m1(&[0.0], &[1.0]);
    let d1 = m1(&[1.0], &[1.0]);
    let u = mixture(&[d0, d1], &[0.5, 0.5]).unwrap();
    assert_eq!(u, m1(&[0.0, 1.0], &[0.5, 0.5]));

    let nu = random_measure(&mut rng, 2, 5);
    let lam = 0.3;
    let mix = mixture(&[mu.clone(), nu.clone()], &[lam, 1.0 - lam]).unwrap();
    let lhs = moment(&mix, 2.0).unwrap().powi(2);
    let rhs = lam * moment(&mu, 2.0).unwrap().powi(2) + (1.0 - lam) * moment(&nu, 2.0).unwrap().powi(2);
    assert!((lhs - rhs).abs() < 1e-12);

    assert!(matches!(mixture(&[mu.clone(), nu.clone()], &[0.5, 0.6]), Err(Error::Validation(_))));
    let line = m1(&[0.0], &[1.0]);
    assert!(matches!(mixture(&[mu, line], &[0.5, 0.5]), Err(Error::Dimension(_))));
}

#[test]
fn rate_f_examples() {
    assert!((rate_f(3, 100).unwrap() - 0.1).abs() < 1e-15);
    assert!((rate_f(6, 64).unwrap() - 0.25).abs() < 1e-15);
    assert!((rate_f(4, 100).unwrap() - 0.1 * 100f64.ln()).abs() < 1e-14);
    assert!((rate_f(4, 100).unwrap() - 0.4605).abs() < 1e-4);
    let e2 = std::f64::consts::E.powi(2);
    assert!((rate_f_real(4, e2).unwrap() - 2.0 / std::f64::consts::E).abs() < 1e-14);
    assert!(matches!(rate_f(1, 1), Err(Error::Parameter(_))));
}

#[test]
fn subsample_keeps_small_measures_and_renormalises() {
    let mut rng = rng_from(12);
    let mu = random_measure(&mut rng, 2, 5);
    assert_eq!(mu.subsample(10, &mut rng).unwrap(), mu);
    let big = DiscreteMeasure::uniform(1, (0..1000).map(|i| i as f64).collect()).unwrap();
    let s = big.subsample(100, &mut rng).unwrap();
    assert_eq!(s.len(), 100);
    assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

fn arb_measure(dim: usize, max_atoms: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(-3.0f64..3.0, n * dim),
                prop::collection::vec(0.01f64..1.0, n),
            )
        })
        .prop_map(move |(pts, raw)| {
            let s: f64 = raw.iter().sum();
            let n = raw.len();
            let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let head: f64 = w[..n - 1].iter().sum();
            w[n - 1] = 1.0 - head;
            DiscreteMeasure::new(dim, pts, w).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triangle_inequality(a in arb_measure(2, 6), b in arb_measure(2, 6), c in arb_measure(2, 6)) {
        let ac = w2_exact_lp(&a, &c).unwrap().0;
        let ab = w2_exact_lp(&a, &b).unwrap().0;
        let bc = w2_exact_lp(&b, &c).unwrap().0;
        prop_assert!(ac <= ab + bc + 1e-8);
    }

    #[test]
    fn symmetric_and_plan_consistent(a in arb_measure(3, 7), b in arb_measure(3, 7)) {
        let (ab, plan) = w2_exact_lp(&a, &b).unwrap();
        let (ba, _) = w2_exact_lp(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(plan.marginal_error() < 1e-10);
        prop_assert!((plan.cost() - ab * ab).abs() < 1e-12);
    }

    #[test]
    fn dirac_shift(x in prop::collection::vec(-5.0f64..5.0, 3), y in prop::collection::vec(-5.0f64..5.0, 3)) {
        let d = sq_dist(&x, &y).sqrt();
        let (w, _) = w2_exact_lp(&DiscreteMeasure::dirac(&x).unwrap(), &DiscreteMeasure::dirac(&y).unwrap()).unwrap();
        prop_assert!((w - d).abs() <= 1e-12 * (1.0 + d));
    }

    #[test]
    fn one_d_agreement(a in arb_measure(1, 10), b in arb_measure(1, 10)) {
        let x = w2_exact_1d(&a, &b).unwrap();
        let (y, _) = w2_exact_lp(&a, &b).unwrap();
        prop_assert!((x - y).abs() < 1e-9);
    }
}
