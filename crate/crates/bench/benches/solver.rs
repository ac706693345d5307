use criterion::{criterion_group, criterion_main, Criterion};
use kraichnan_core::radial_pde::geometric_schedule;
use kraichnan_core::{build_grid, evolve, IsotropicKernel, ModelParams, PdeConfig};

fn transport(c: &mut Criterion) {
    let k = IsotropicKernel::new(ModelParams::self_similar(2, 0.5, 1.0, 1.0)).unwrap();
    let grid = build_grid(1e-4, 20.0, 1.05).unwrap();
    let f0 = grid.sample(|r| (-r).exp());
    let cfg = PdeConfig {
        observable_times: geometric_schedule(1e-2, 1.0, 5),
        ..Default::default()
    };
    let mut group = c.benchmark_group("evolve");
    group.sample_size(10);
    group.bench_function("self-similar d=2 to t=1", |b| {
        b.iter(|| evolve(&k, &grid, &cfg, &f0, 1.0).unwrap())
    });
    group.finish();
}

criterion_group!(benches, transport);
criterion_main!(benches);
