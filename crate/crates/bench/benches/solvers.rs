use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use crt_bench::{random_matrix, spiked_low_rank};
use crt_core::prox::{prox_l21_columns, prox_nuclear, soft_threshold};
use crt_core::rpca::rpca_decompose;
use crt_core::solver::{fit_robust, LossMode, SolverConfig};

fn bench_prox(c: &mut Criterion) {
    let m = random_matrix(1, 128, 128);
    c.bench_function("prox_nuclear 128x128", |b| {
        b.iter(|| black_box(prox_nuclear(&m, 0.5).unwrap()))
    });
    c.bench_function("prox_l21 128x128", |b| {
        b.iter(|| black_box(prox_l21_columns(&m, 0.5)))
    });
    c.bench_function("soft_threshold 128x128", |b| {
        b.iter(|| black_box(soft_threshold(&m, 0.5)))
    });
}

fn bench_fits(c: &mut Criterion) {
    let noisy = random_matrix(2, 32, 64);
    let clean = random_matrix(3, 32, 64);
    let cfg = SolverConfig {
        mu0: 1e-3,
        rho: 1.5,
        tol: 1e-5,
        max_iter: 200,
        ..SolverConfig::default()
    };
    c.bench_function("fit_robust 32x64", |b| {
        b.iter(|| black_box(fit_robust(&clean, &noisy, 0.12, LossMode::L21, &cfg).unwrap()))
    });

    let x = spiked_low_rank(4, 48, 2, 19);
    c.bench_function("rpca 48x48", |b| {
        b.iter(|| black_box(rpca_decompose(&x, 1.0 / (48f64).sqrt(), &cfg).unwrap()))
    });
}

criterion_group!(benches, bench_prox, bench_fits);
criterion_main!(benches);
