use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hermproj_core::hermite::hermite_eval_1d;
use hermproj_core::localization::{AnnulusSpec, Region, DEFAULT_BUDGET};
use hermproj_core::mehler::{kernel_direct, kernel_mehler, OscIntegralSpec};
use hermproj_core::normlab::{assemble, norm_2_2_gram, norm_p_q_power, PowerSpec};

fn hermite(c: &mut Criterion) {
    let mut g = c.benchmark_group("hermite_eval_1d");
    for n in [100usize, 1000, 10_000] {
        let x = 0.7 * (2.0 * n as f64 + 1.0).sqrt();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| b.iter(|| hermite_eval_1d(n, black_box(x))));
    }
    g.finish();
}

fn kernels(c: &mut Criterion) {
    let spec = OscIntegralSpec::default();
    let mut g = c.benchmark_group("kernel");
    g.sample_size(20);
    for (d, lambda) in [(1usize, 21u32), (2, 20)] {
        let x: Vec<f64> = (0..d).map(|i| 0.9 + 0.3 * i as f64).collect();
        let y: Vec<f64> = (0..d).map(|i| -0.4 + 0.5 * i as f64).collect();
        g.bench_function(format!("mehler/d{d}/l{lambda}"), |b| b.iter(|| kernel_mehler(lambda, black_box(&x), &y, &spec)));
        g.bench_function(format!("direct/d{d}/l{lambda}"), |b| b.iter(|| kernel_direct(lambda, black_box(&x), &y)));
    }
    g.finish();
}

fn operators(c: &mut Criterion) {
    let shell = Region::Shell(AnnulusSpec::plus(0.25).unwrap());
    let ball = Region::Ball { radius: 2.0 };
    let mut g = c.benchmark_group("norm_lab");
    g.sample_size(10);
    g.bench_function("assemble/d2/l42", |b| b.iter(|| assemble(42, 2, ball, shell, 8.0, DEFAULT_BUDGET)));
    g.bench_function("gram/d2/l42", |b| b.iter(|| norm_2_2_gram(42, 2, shell, 8.0, DEFAULT_BUDGET)));
    let op = assemble(22, 2, ball, shell, 8.0, DEFAULT_BUDGET).unwrap();
    let spec = PowerSpec::default();
    g.bench_function("power/d2/l22/q4", |b| b.iter(|| norm_p_q_power(&op, 2.0, 4.0, &spec)));
    g.bench_function("power/d2/l22/p1.5/q3", |b| b.iter(|| norm_p_q_power(&op, 1.5, 3.0, &spec)));
    g.finish();
}

criterion_group!(benches, hermite, kernels, operators);
criterion_main!(benches);
