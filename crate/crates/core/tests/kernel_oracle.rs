//! Full Kraichnan structure functions against frozen high-precision values.
//!
//! The reference numbers come from `oracles/kernel_matern.py`, which works in
//! physical space through the Matérn representation of the covariance and
//! shares no code path with the library's nested quadrature.

#![allow(clippy::excessive_precision)]

use kraichnan_core::{IsotropicKernel, KernelMode, ModelParams};
use std::time::Instant;

struct Case {
    d: usize,
    alpha: f64,
    eta: f64,
    m: f64,
    trace_c0: f64,
    r: f64,
    b_l: f64,
    b_n: f64,
}

const CASES: [Case; 5] = [
    Case {
        d: 2,
        alpha: 0.5,
        eta: 1.0,
        m: 1.0,
        trace_c0: 4.0,
        r: 0.1,
        b_l: 0.128463935822212192,
        b_n: 0.252186392033949515,
    },
    Case {
        d: 2,
        alpha: 0.5,
        eta: 1.0,
        m: 1.0,
        trace_c0: 4.0,
        r: 1.0,
        b_l: 0.943035529371538573,
        b_n: 1.58544670594269214,
    },
    Case {
        d: 3,
        alpha: 0.3,
        eta: 0.4,
        m: 1.0,
        trace_c0: 6.0,
        r: 0.1,
        b_l: 0.535132438340612187,
        b_n: 0.442173513844702028,
    },
    Case {
        d: 2,
        alpha: 0.75,
        eta: 0.5,
        m: 2.0,
        trace_c0: 4.0,
        r: 0.05,
        b_l: 0.0683167142945884658,
        b_n: 0.0683167142945884658,
    },
    Case {
        d: 3,
        alpha: 0.5,
        eta: 1.0,
        m: 1.0,
        trace_c0: 6.0,
        r: 3.0,
        b_l: 1.7436400360563749,
        b_n: 1.97881877686822072,
    },
];

fn params(c: &Case) -> ModelParams {
    ModelParams {
        d: c.d,
        alpha: c.alpha,
        eta: c.eta,
        m: c.m,
        trace_c0: c.trace_c0,
        kernel_mode: KernelMode::FullKraichnan,
        self_similar_c: 1.0,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn direct_quadrature_matches_matern_oracle() {
    for c in &CASES {
        let started = Instant::now();
        let kernel = IsotropicKernel::new(params(c)).unwrap();
        let built = started.elapsed();
        let (bl, bn) = kernel.direct_coefficients(c.r).unwrap();
        assert!(rel(bl, c.b_l) < 1e-6, "b_L at r={}: {bl} vs {}", c.r, c.b_l);
        assert!(rel(bn, c.b_n) < 1e-6, "b_N at r={}: {bn} vs {}", c.r, c.b_n);
        let (tl, tn) = kernel.structure_coefficients(c.r).unwrap();
        eprintln!(
            "d={} alpha={} eta={} r={}: direct err {:.1e}/{:.1e}, table err {:.1e}/{:.1e}, build {:?}",
            c.d, c.alpha, c.eta, c.r,
            rel(bl, c.b_l), rel(bn, c.b_n), rel(tl, c.b_l), rel(tn, c.b_n), built
        );
        assert!(
            rel(tl, c.b_l) < 1e-5,
            "tabulated b_L at r={}: {tl} vs {}",
            c.r,
            c.b_l
        );
        assert!(
            rel(tn, c.b_n) < 1e-5,
            "tabulated b_N at r={}: {tn} vs {}",
            c.r,
            c.b_n
        );
    }
}

#[test]
fn full_kernel_is_positive_and_bounded() {
    let kernel = IsotropicKernel::new(ModelParams::full(2, 0.5, 1.0, 1.0)).unwrap();
    let trace = kernel.params().trace_c0;
    assert_eq!(kernel.structure_coefficients(0.0).unwrap(), (0.0, 0.0));
    for k in 0..200 {
        let r = 1e-6 * 10f64.powf(k as f64 * 9.0 / 199.0);
        let (bl, bn) = kernel.structure_coefficients(r).unwrap();
        assert!(bl > 0.0 && bn > 0.0);
        assert!(bl <= trace && bn <= trace, "r={r}: {bl} {bn}");
    }
    assert!(kernel.ellipticity_floor(0.1, 10.0, 50).unwrap() > 0.0);
}
