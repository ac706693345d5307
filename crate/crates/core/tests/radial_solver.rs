use kraichnan_core::radial_pde::{
    build_grid, build_grid_with_cap, evolve, geometric_schedule, xi_diagnostic, Mode, OuterBc,
    PdeConfig,
};
use kraichnan_core::{IsotropicKernel, ModelParams};
use proptest::prelude::*;

fn heat_error(h: f64, dt: f64) -> f64 {
    // zero kernel, c0 = 1, so the diffusivity is 2κ = 0.5
    let k = IsotropicKernel::zero(2, 4.0).unwrap();
    let grid = build_grid_with_cap(h, 12.0, 1.05, 4.0 * h).unwrap();
    let cfg = PdeConfig {
        kappa: 0.25,
        dt_max: dt,
        dt_min: dt,
        dt_rel: 1.0,
        ..Default::default()
    };
    let f0 = grid.sample(|r| (-r * r / 4.0).exp());
    let run = evolve(&k, &grid, &cfg, &f0, 1.0).unwrap();
    let s2 = 1.5;
    let last = run.profiles.last().unwrap();
    grid.nodes
        .iter()
        .zip(&last.values)
        .map(|(r, v)| (v - (-r * r / (4.0 * s2)).exp() / s2).abs())
        .fold(0.0, f64::max)
}

#[test]
fn heat_kernel_second_order() {
    let errs: Vec<f64> = [(0.02, 0.004), (0.01, 0.001), (0.005, 0.00025)]
        .iter()
        .map(|&(h, dt)| heat_error(h, dt))
        .collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "observed order {order} from {errs:?}");
    }
}

#[test]
fn constants_are_stationary() {
    let k = IsotropicKernel::new(ModelParams::self_similar(3, 0.4, 0.7, 1.3)).unwrap();
    let grid = build_grid(1e-4, 10.0, 1.05).unwrap();
    let f0 = vec![2.75; grid.len()];
    let cfg = PdeConfig {
        kappa: 0.1,
        ..Default::default()
    };
    let run = evolve(&k, &grid, &cfg, &f0, 0.5).unwrap();
    for p in &run.profiles {
        assert!(p.values.iter().all(|v| (v - 2.75).abs() < 1e-12));
    }
}

#[test]
fn zero_data_gives_zero_energy() {
    let k = IsotropicKernel::new(ModelParams::self_similar(2, 0.5, 1.0, 1.0)).unwrap();
    let grid = build_grid(1e-4, 10.0, 1.05).unwrap();
    let run = evolve(
        &k,
        &grid,
        &PdeConfig::default(),
        &vec![0.0; grid.len()],
        1.0,
    )
    .unwrap();
    assert!(run.energy.iter().all(|e| *e == 0.0));
}

#[test]
fn self_similar_scaling_invariance() {
    let alpha = 0.6;
    let k = IsotropicKernel::new(ModelParams::self_similar(2, alpha, 1.0, 1.0)).unwrap();
    let gamma = 2.0 - 2.0 * alpha;
    let lambda: f64 = 3.0;
    let base = |scale: f64| {
        let grid = build_grid_with_cap(1e-4 * scale, 20.0 * scale, 1.05, 0.1 * scale).unwrap();
        let ts = scale.powf(gamma);
        let cfg = PdeConfig {
            dt_max: 1e-2 * ts,
            dt_min: 1e-7 * ts,
            ..Default::default()
        };
        let f0 = grid.sample(|r| (-(r / scale)).exp());
        evolve(&k, &grid, &cfg, &f0, 0.5 * ts).unwrap()
    };
    let a = base(1.0);
    let b = base(lambda);
    let fa = &a.profiles.last().unwrap().values;
    let fb = &b.profiles.last().unwrap().values;
    assert_eq!(fa.len(), fb.len());
    let err = fa
        .iter()
        .zip(fb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
}

#[test]
fn continuity_mode_needs_incompressible_kernel() {
    let k = IsotropicKernel::new(ModelParams::self_similar(2, 0.5, 0.5, 1.0)).unwrap();
    let grid = build_grid(1e-4, 10.0, 1.05).unwrap();
    let cfg = PdeConfig {
        mode: Mode::ContinuityDivfree,
        ..Default::default()
    };
    let f0 = grid.sample(|r| (-r * r).exp());
    assert!(evolve(&k, &grid, &cfg, &f0, 1.0).is_err());
}

#[test]
fn continuity_mode_conserves_mass() {
    let k = IsotropicKernel::new(ModelParams::full(3, 0.5, 1.0, 1.0)).unwrap();
    let grid = build_grid(1e-4, 30.0, 1.05).unwrap();
    let cfg = PdeConfig {
        mode: Mode::ContinuityDivfree,
        outer_bc: OuterBc::HomogeneousNeumann,
        observable_times: geometric_schedule(1e-2, 2.0, 5),
        ..Default::default()
    };
    let f0 = grid.sample(|r| (-r * r).exp());
    let run = evolve(&k, &grid, &cfg, &f0, 2.0).unwrap();
    let m0 = run.mass[0];
    for m in &run.mass {
        assert!((m - m0).abs() <= 1e-6 * m0.abs(), "{m} vs {m0}");
    }
}

#[test]
fn positive_type_energy_is_the_maximum_and_decreases() {
    let k = IsotropicKernel::new(ModelParams::full(2, 0.5, 1.0, 1.0)).unwrap();
    let grid = build_grid(1e-4, 20.0, 1.05).unwrap();
    let cfg = PdeConfig {
        observable_times: geometric_schedule(1e-2, 1.0, 5),
        ..Default::default()
    };
    let f0 = grid.sample(|r| (-r).exp());
    let run = evolve(&k, &grid, &cfg, &f0, 1.0).unwrap();
    for w in run.energy.windows(2) {
        assert!(w[1] <= w[0]);
    }
    for p in &run.profiles {
        assert!(p.values.iter().all(|v| v.abs() <= p.values[0] + 1e-12));
    }
}

#[test]
fn xi_ratio_tends_to_c_xi() {
    let k = IsotropicKernel::new(ModelParams::self_similar(2, 0.5, 1.0, 1.0)).unwrap();
    let rs: Vec<f64> = (0..13).map(|i| 1e-6 * 10f64.powf(i as f64 * 0.5)).collect();
    let rows = xi_diagnostic(&k, 0.1, &rs).unwrap();
    let c_xi = 1.0 / 1.9;
    for row in rows.iter().filter(|r| r.r <= 1e-3) {
        assert!(
            (row.ratio - c_xi).abs() < 1e-2 * c_xi,
            "r = {} ratio = {}",
            row.r,
            row.ratio
        );
    }
    assert!(rows.windows(2).all(|w| w[1].xi > w[0].xi));
    assert!(xi_diagnostic(&k, 0.6, &rs).is_err());
}

#[test]
fn xi_ratio_on_full_kernel_uses_c_normalization() {
    let k = IsotropicKernel::new(ModelParams::full(3, 0.4, 0.8, 1.0)).unwrap();
    let rows = xi_diagnostic(&k, 0.05, &[1e-7, 1e-6, 1e-5]).unwrap();
    let c_xi = k.constants().c_xi(0.05).unwrap();
    let last = rows[0];
    assert!(
        (last.ratio - c_xi).abs() < 1e-2 * c_xi,
        "{} vs {c_xi}",
        last.ratio
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn maximum_principle(
        amps in proptest::collection::vec(-1.0f64..1.0, 4),
        alpha in 0.2f64..0.8,
        kappa in 0.0f64..0.3,
    ) {
        let k = IsotropicKernel::new(ModelParams::self_similar(2, alpha, 1.0, 1.0)).unwrap();
        let grid = build_grid(1e-3, 8.0, 1.08).unwrap();
        let f0 = grid.sample(|r| {
            amps.iter().enumerate().map(|(j, a)| a * (-(r * (j + 1) as f64)).exp() * (r * j as f64).cos()).sum()
        });
        let cfg = PdeConfig { kappa, observable_times: vec![0.05, 0.1], ..Default::default() };
        let run = evolve(&k, &grid, &cfg, &f0, 0.2).unwrap();
        let bound = f0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for p in &run.profiles {
            for v in &p.values {
                prop_assert!(v.abs() <= bound + 1e-10);
            }
        }
    }
}
