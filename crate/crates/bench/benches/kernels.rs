use criterion::{criterion_group, criterion_main, Criterion};
use kraichnan_core::{IsotropicKernel, ModelParams};
use std::hint::black_box;

fn tabulation(c: &mut Criterion) {
    c.bench_function("full kernel d=3 alpha=0.4", |b| {
        b.iter(|| IsotropicKernel::new(black_box(ModelParams::full(3, 0.4, 0.8, 1.0))).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let k = IsotropicKernel::new(ModelParams::full(2, 0.5, 1.0, 1.0)).unwrap();
    let rs: Vec<f64> = (0..1000).map(|i| 1e-5 * 1.015f64.powi(i)).collect();
    c.bench_function("coefficients x1000", |b| {
        b.iter(|| {
            rs.iter()
                .map(|&r| k.coefficients(black_box(r)).b_l)
                .sum::<f64>()
        })
    });
}

criterion_group!(benches, tabulation, evaluation);
criterion_main!(benches);
