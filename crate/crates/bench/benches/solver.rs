use std::hint::black_box;

use artic_bench::revolute_problem;
use artic_core::solver::{linearize, random_init, solve, solve_single, SolverConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn solver(c: &mut Criterion) {
    let mut group = c.benchmark_group("linearize");
    for n in [10, 80, 320] {
        let p = revolute_problem(n, 1);
        let v = random_init(&p, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| linearize(black_box(&p), &v)));
    }
    group.finish();

    let mut group = c.benchmark_group("solve_single");
    group.sample_size(10);
    for n in [10, 80] {
        let p = revolute_problem(n, 1);
        let cfg = SolverConfig::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_single(black_box(&p), random_init(&p, 7), &cfg))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("solve_restarts");
    group.sample_size(10);
    let p = revolute_problem(20, 2);
    group.bench_function("T20_P10", |b| b.iter(|| solve(black_box(&p), &SolverConfig::default())));
    group.finish();
}

criterion_group!(benches, solver);
criterion_main!(benches);
