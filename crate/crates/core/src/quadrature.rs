//! Quadrature rules used by the kernel and solver code.
//!
//! The workhorse is [`adaptive`], a globally adaptive 21-point
//! Gauss–Kronrod scheme in the style of QUADPACK's QAG. Semi-infinite
//! integrals with slowly decaying algebraic tails are handled by
//! [`power_tail`] (a change of variables that makes the tail smooth) and
//! Fourier-type tails by [`cos_tail`] (half-period summation accelerated with
//! Wynn's ε-algorithm).

// nodes and weights are quoted to full published precision
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_994_454_186,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights, paired with XGK[1], XGK[3], ..., XGK[9]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_146,
];

/// Tolerances for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_subdivisions: 2000,
        }
    }
}

impl QuadOptions {
    pub fn rel(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 21-point Gauss–Kronrod panel: (integral, error estimate).
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv = [0.0f64; 21];
    fv[10] = fc;
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[20 - j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[20 - j] - mean).abs());
    }
    let integral = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (integral, err)
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Panels are bisected in order of decreasing error estimate until the total
/// error meets `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    adaptive_with_breaks(&mut f, &[a, b], opts)
}

/// Like [`adaptive`] but starting from the panels delimited by `points`
/// (sorted, at least two entries).
pub fn adaptive_with_breaks<F: FnMut(f64) -> f64>(
    f: &mut F,
    points: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    assert!(points.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(points.len() + 64);
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in points.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        let (v, e) = gk21(f, w[0], w[1]);
        evals += 21;
        total += v;
        total_err += e;
        heap.push(Panel {
            a: w[0],
            b: w[1],
            value: v,
            error: e,
        });
    }
    let mut splits = 0;
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol || heap.is_empty() {
            break;
        }
        if splits >= opts.max_subdivisions {
            return Err(Error::Quadrature {
                achieved: total_err,
                requested: tol,
                context: format!(
                    "[{}, {}] after {splits} bisections",
                    points[0],
                    points[points.len() - 1]
                ),
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // panel at machine resolution; its error cannot be reduced further
            total_err -= worst.error;
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            continue;
        }
        let (v1, e1) = gk21(f, worst.a, mid);
        let (v2, e2) = gk21(f, mid, worst.b);
        evals += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        splits += 1;
    }
    // re-sum for a clean total
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations: evals,
    })
}

/// ∫_a^∞ g(x) dx for `g(x) ~ x^{-decay}` at infinity (`decay > 1`).
///
/// Substitutes `x = a v^{-1/(decay-1)}`, which maps the tail onto `(0, 1]`
/// with a bounded, smooth integrand when `g` is a pure power law.
pub fn power_tail<F: FnMut(f64) -> f64>(
    mut g: F,
    a: f64,
    decay: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    assert!(a > 0.0 && decay > 1.0);
    let k = 1.0 / (decay - 1.0);
    let h = move |v: f64| {
        if v <= 0.0 {
            return 0.0;
        }
        let x = a * v.powf(-k);
        g(x) * a * k * v.powf(-k - 1.0)
    };
    adaptive(h, 0.0, 1.0, opts)
}

/// ∫_0^b f(x) dx for `f(x) ~ x^{p}` near the origin (`p > -1`).
///
/// Substitutes `x = b t^{1/(p+1)}`, turning the algebraic endpoint behaviour
/// into a constant.
pub fn origin_singular<F: FnMut(f64) -> f64>(
    mut f: F,
    b: f64,
    p: f64,
    opts: QuadOptions,
) -> Result<QuadResult> {
    assert!(p > -1.0 && b > 0.0);
    let q = p + 1.0;
    let h = move |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        let x = b * t.powf(1.0 / q);
        f(x) * b / q * t.powf(1.0 / q - 1.0)
    };
    adaptive(h, 0.0, 1.0, opts)
}

/// ∫_a^∞ cos(x) g(x) dx for `g` eventually monotone and decaying.
///
/// Sums integrals between consecutive zeros of cos beyond `a` (an
/// alternating series) and accelerates the partial sums with Wynn's
/// ε-algorithm.
pub fn cos_tail<F: FnMut(f64) -> f64>(mut g: F, a: f64, opts: QuadOptions) -> Result<QuadResult> {
    use std::f64::consts::PI;
    let mut h = |x: f64| x.cos() * g(x);
    // first zero of cos at or after a
    let k0 = ((a / PI) - 0.5).ceil();
    let z0 = (k0 + 0.5) * PI;
    let mut evals = 0;
    let mut head = 0.0;
    if z0 > a {
        let r = adaptive(&mut h, a, z0, opts)?;
        head = r.value;
        evals += r.evaluations;
    }
    let mut partial = Vec::with_capacity(64);
    let mut s = 0.0;
    let mut estimate = f64::NAN;
    let mut err = f64::INFINITY;
    let term_opts = QuadOptions {
        abs_tol: 0.0,
        ..opts
    };
    for k in 0..200 {
        let lo = z0 + k as f64 * PI;
        let r = adaptive(&mut h, lo, lo + PI, term_opts)?;
        evals += r.evaluations;
        s += r.value;
        partial.push(s);
        if partial.len() >= 6 {
            let (e, de) = wynn_epsilon(&partial);
            if k >= 10
                && (de <= opts.rel_tol * e.abs().max(f64::MIN_POSITIVE) || de <= opts.abs_tol)
            {
                estimate = e;
                err = de;
                break;
            }
            estimate = e;
            err = de;
        }
    }
    if !estimate.is_finite() {
        return Err(Error::Quadrature {
            achieved: err,
            requested: opts.rel_tol,
            context: format!("oscillatory tail from {a}"),
        });
    }
    Ok(QuadResult {
        value: head + estimate,
        error: err,
        evaluations: evals,
    })
}

/// Wynn's ε-algorithm applied to a sequence of partial sums.
///
/// Returns the best extrapolated limit and a crude error estimate (the
/// difference between the last two even-column estimates).
pub fn wynn_epsilon(partial: &[f64]) -> (f64, f64) {
    let n = partial.len();
    if n < 3 {
        let last = partial[n - 1];
        return (last, f64::INFINITY);
    }
    let mut prev: Vec<f64> = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partial.to_vec();
    let mut estimates = Vec::new();
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            let base = prev[i + 1];
            let v = if diff == 0.0 {
                f64::INFINITY
            } else {
                base + 1.0 / diff
            };
            next.push(v);
        }
        col += 1;
        prev = cur;
        cur = next;
        if col % 2 == 0 {
            if let Some(&v) = cur.last() {
                if v.is_finite() {
                    estimates.push(v);
                }
            }
        }
        if cur.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    match estimates.len() {
        0 => (partial[n - 1], (partial[n - 1] - partial[n - 2]).abs()),
        1 => (estimates[0], (estimates[0] - partial[n - 1]).abs()),
        m => (
            estimates[m - 1],
            (estimates[m - 1] - estimates[m - 2]).abs(),
        ),
    }
}

/// Fixed-order Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            let w = 2.0 / ((1.0 - x * x) * d * d);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
