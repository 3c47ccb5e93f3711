use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rmtlab::arithmetic::{rlogd_matrix, rlogd_vector, xi_norm, LcdParams, XiMethod};
use rmtlab::experiments::{distances_to_column_spans, evaluate_statistic, Statistic};
use rmtlab::smallball::levy_exact_discrete;
use rmtlab::spectral::eigen_sorted;
use rmtlab::{DistSpec, MatrixProfile, StreamKey};
use rmtlab_bench::{dense, symmetric, unit_vector};

fn spectra(c: &mut Criterion) {
    let mut g = c.benchmark_group("eigenvalues");
    for n in [50, 100, 200] {
        let a = symmetric(n, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| b.iter(|| eigen_sorted(black_box(a))));
    }
    g.finish();

    let profile = MatrixProfile::new(100, DistSpec::rademacher());
    c.bench_function("gap trial n=100", |b| {
        let mut t = 0u64;
        b.iter(|| {
            t += 1;
            evaluate_statistic(&Statistic::Gap { i: 50, k: 1 }, &profile, StreamKey::new(t)).unwrap()
        })
    });
}

fn distance(c: &mut Criterion) {
    let a = symmetric(128, 2);
    let v = unit_vector(128);
    c.bench_function("distance n=128 k={1,4,8}", |b| {
        b.iter(|| distances_to_column_spans(black_box(&a), black_box(&v), &[1, 4, 8]).unwrap())
    });
}

fn small_ball(c: &mut Criterion) {
    let r = DistSpec::rademacher();
    let v = unit_vector(20);
    c.bench_function("levy exact n=20", |b| b.iter(|| levy_exact_discrete(black_box(&v), &r, 0.1, false).unwrap()));
}

fn arithmetic(c: &mut Criterion) {
    let r = DistSpec::rademacher();
    let g = DistSpec::gaussian();
    let x: Vec<f64> = unit_vector(64).iter().map(|v| v * 7.3).collect();
    c.bench_function("xi norm gaussian n=64", |b| b.iter(|| xi_norm(black_box(&x), &g, XiMethod::Quadrature).unwrap()));
    let params = LcdParams::new(0.05, 0.5, 50.0).unwrap();
    let v2 = unit_vector(2);
    c.bench_function("rlogd vector d=2", |b| b.iter(|| rlogd_vector(black_box(&v2), &params, &r).unwrap()));
    let w = dense(6, 2);
    let params = LcdParams::new(0.05, 0.5, 10.0).unwrap();
    c.bench_function("rlogd matrix 6x2", |b| b.iter(|| rlogd_matrix(black_box(&w), &params, &r).unwrap()));
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = spectra, distance, small_ball, arithmetic
}
criterion_main!(kernels);
