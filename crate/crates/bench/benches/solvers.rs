use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stackmf_bench::{cloud, interacting_model, measure};
use stackmf_core::dynamics::{simulate_nplayer, DelayLaw, PolicySet, SeedRecord};
use stackmf_core::measures::{w2_exact_lp, w2_squared_1d, w2_squared_uniform};
use stackmf_core::meanfield::{solve_conditional_law, SolverOptions};

fn transport(c: &mut Criterion) {
    let mut g = c.benchmark_group("w2");
    for n in [64usize, 256] {
        let (a, b) = (measure(2, n, 1), measure(2, n, 2));
        g.bench_with_input(BenchmarkId::new("network_simplex_2d", n), &n, |bench, _| {
            bench.iter(|| w2_exact_lp(&a, &b).unwrap())
        });
    }
    for n in [1024usize, 16384] {
        let (a, b) = (measure(1, n, 3), measure(1, n, 4));
        g.bench_with_input(BenchmarkId::new("quantile_1d", n), &n, |bench, _| {
            bench.iter(|| w2_squared_1d(&a, &b).unwrap())
        });
    }
    for n in [400usize, 1600] {
        let (a, b) = (cloud(3, n, 5), cloud(3, n, 6));
        g.bench_with_input(BenchmarkId::new("assignment_3d", n), &n, |bench, _| {
            bench.iter(|| w2_squared_uniform(3, &a, &b).unwrap())
        });
    }
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let model = interacting_model(1.0 / 64.0);
    let law = DelayLaw::Uniform { low: 0.05, high: 0.25 };
    let mut g = c.benchmark_group("simulate");
    for n in [16usize, 256] {
        g.bench_with_input(BenchmarkId::new("nplayer", n), &n, |bench, &n| {
            bench.iter(|| simulate_nplayer(&model, &PolicySet::zero(), n, &law, SeedRecord::new(7, 0)).unwrap())
        });
    }
    g.finish();
}

fn picard(c: &mut Criterion) {
    let model = interacting_model(1.0 / 32.0);
    let opts = SolverOptions { particles: 512, ..Default::default() };
    let partition = [(0.05, 0.5), (0.2, 0.5)];
    c.bench_function("picard_two_atoms_k512", |bench| {
        bench.iter(|| solve_conditional_law(&model, &PolicySet::zero(), &partition, SeedRecord::new(9, 0), &opts).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = transport, simulation, picard
}
criterion_main!(benches);
