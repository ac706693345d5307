//! Isotropic Kraichnan covariance and the constants derived from it.
//!
//! The spectral density is
//!
//! ```text
//! Ĉ(ρu) ∝ (ρ² + m²)^{-d/2-α} [ a u⊗u + b/(d-1) (I - u⊗u) ],
//! ```
//!
//! with `b = η(a+b)` (solenoidal part) and `a = (1-η)(a+b)` (potential
//! part). The overall scale `a+b` is fixed by the requested `Tr C(0)`.
//! Physical-space structure functions are written along the direction of
//! the separation: `Q(z) = C(0) - C(z) = b_L ẑ⊗ẑ + b_N (I - ẑ⊗ẑ)`.
//!
//! In `full_kraichnan` mode `b_L` and `b_N` are computed by nested
//! quadrature and tabulated on a log grid; in `self_similar` mode they are
//! the pure power laws `c r^{2α}` and `βc r^{2α}`.

use crate::error::{invalid, Error, Result};
use crate::interp::MonotoneCubic;
use crate::quadrature::{self, QuadOptions};
use crate::special;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

/// Half-width of the band around a regime threshold that is reported as
/// [`Regime::BoundaryCase`].
pub const REGIME_TIE_BAND: f64 = 1e-12;

const TABLE_SIZE: usize = 512;
const TABLE_LO: f64 = 1e-6;
const TABLE_HI: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    FullKraichnan,
    SelfSimilar,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full_kraichnan" => Ok(Self::FullKraichnan),
            "self_similar" => Ok(Self::SelfSimilar),
            other => Err(invalid(format!(
                "unknown kernel mode {other:?} (expected full_kraichnan or self_similar)"
            ))),
        }
    }
}

/// Parameters of the Kraichnan model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub alpha: f64,
    pub eta: f64,
    pub m: f64,
    /// Target value of Tr C(0).
    pub trace_c0: f64,
    pub kernel_mode: KernelMode,
    /// Amplitude of `b_L = c r^{2α}` in self-similar mode.
    pub self_similar_c: f64,
}

impl ModelParams {
    /// Full Kraichnan kernel with the default normalization `C(0) = 2 I_d`.
    pub fn full(d: usize, alpha: f64, eta: f64, m: f64) -> Self {
        Self {
            d,
            alpha,
            eta,
            m,
            trace_c0: 2.0 * d as f64,
            kernel_mode: KernelMode::FullKraichnan,
            self_similar_c: 1.0,
        }
    }

    pub fn self_similar(d: usize, alpha: f64, eta: f64, c: f64) -> Self {
        Self {
            kernel_mode: KernelMode::SelfSimilar,
            self_similar_c: c,
            ..Self::full(d, alpha, eta, 1.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(invalid(format!("d must be at least 2, got {}", self.d)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(invalid(format!("eta must lie in [0,1], got {}", self.eta)));
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return Err(invalid(format!("m must be positive, got {}", self.m)));
        }
        if !(self.trace_c0 > 0.0 && self.trace_c0.is_finite()) {
            return Err(invalid(format!(
                "trace_c0 must be positive, got {}",
                self.trace_c0
            )));
        }
        if self.kernel_mode == KernelMode::SelfSimilar
            && !(self.self_similar_c > 0.0 && self.self_similar_c.is_finite())
        {
            return Err(invalid(format!(
                "self_similar_c must be positive, got {}",
                self.self_similar_c
            )));
        }
        Ok(())
    }

    /// `c0` with `C(0) = 2 c0 I_d`.
    pub fn c0(&self) -> f64 {
        self.trace_c0 / (2.0 * self.d as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Coalescing,
    DiffusiveWithHitting,
    DiffusiveNoHitting,
    BoundaryCase,
}

impl Regime {
    pub fn is_diffusive(self) -> bool {
        matches!(self, Self::DiffusiveWithHitting | Self::DiffusiveNoHitting)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Coalescing => "coalescing",
            Self::DiffusiveWithHitting => "diffusive_with_hitting",
            Self::DiffusiveNoHitting => "diffusive_no_hitting",
            Self::BoundaryCase => "boundary_case",
        }
    }
}

/// The two compressibility thresholds `(1 - d/(4α²), 1/2 - (d-2)/(4α))`.
pub fn regime_thresholds(alpha: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    (
        1.0 - d / (4.0 * alpha * alpha),
        0.5 - (d - 2.0) / (4.0 * alpha),
    )
}

/// Classifies the particle behaviour for the given (α, η, d).
///
/// η within [`REGIME_TIE_BAND`] of either threshold is reported as
/// [`Regime::BoundaryCase`].
pub fn classify_regime(alpha: f64, eta: f64, d: usize) -> Result<Regime> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(invalid(format!("eta must lie in [0,1], got {eta}")));
    }
    if d < 2 {
        return Err(invalid(format!("d must be at least 2, got {d}")));
    }
    let (t1, t2) = regime_thresholds(alpha, d);
    if (eta - t1).abs() <= REGIME_TIE_BAND || (eta - t2).abs() <= REGIME_TIE_BAND {
        return Ok(Regime::BoundaryCase);
    }
    Ok(if eta < t1 {
        Regime::Coalescing
    } else if eta < t2 {
        Regime::DiffusiveWithHitting
    } else {
        Regime::DiffusiveNoHitting
    })
}

/// Constants read off the small-scale behaviour of the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `b_L(r) ~ c r^{2α}` as `r → 0`.
    pub c: f64,
    /// `b_N / b_L → β` as `r → 0`.
    pub beta: f64,
    pub alpha1: f64,
    pub delta_star: f64,
    /// Dissipation constant `d(1-α) c`.
    pub c_tilde: f64,
    pub k_ric: f64,
    /// `B_N(0)`, so that `C(0) = B_N(0) I_d`.
    pub b_n0: f64,
    pub d: usize,
    pub alpha: f64,
}

impl DerivedConstants {
    /// `c_ξ(δ) = 1/((d-1)β + 1 - 2α - δ)` for `δ ∈ (0, δ⋆)`.
    pub fn c_xi(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta < self.delta_star) {
            return Err(invalid(format!(
                "delta must lie in (0, delta_star = {}), got {delta}",
                self.delta_star
            )));
        }
        Ok(1.0 / ((self.d as f64 - 1.0) * self.beta + 1.0 - 2.0 * self.alpha - delta))
    }

    /// Exponent `γ = 2 - 2α` of the leading correlation singularity.
    pub fn gamma(&self) -> f64 {
        2.0 - 2.0 * self.alpha
    }

    /// Itô drift of `r^{2-2α}` for the self-similar separation process:
    /// `cγ(1 - 2α + β(d-1))`.
    pub fn richardson_rate(&self) -> f64 {
        self.c * self.gamma() * (1.0 - 2.0 * self.alpha + self.beta * (self.d as f64 - 1.0))
    }
}

/// `β = (d-1+2αη) / ((d-1)(2α+1-2αη))`.
pub fn beta(d: usize, alpha: f64, eta: f64) -> f64 {
    let dm1 = d as f64 - 1.0;
    (dm1 + 2.0 * alpha * eta) / (dm1 * (2.0 * alpha + 1.0 - 2.0 * alpha * eta))
}

/// `δ⋆ = min(1-α, (d-1)β + 1 - 2α)`, with values within 1e-12 of zero
/// snapped to zero.
pub fn delta_star(d: usize, alpha: f64, eta: f64) -> f64 {
    let v = (1.0 - alpha).min((d as f64 - 1.0) * beta(d, alpha, eta) + 1.0 - 2.0 * alpha);
    if v.abs() < REGIME_TIE_BAND {
        0.0
    } else {
        v
    }
}

// 1 - cos x without cancellation at small x
fn one_minus_cos(x: f64) -> f64 {
    let s = (0.5 * x).sin();
    2.0 * s * s
}

/// `∫_0^∞ (1 - cos x) x^{-1-2α} dx` by quadrature.
pub fn cosine_moment(alpha: f64) -> Result<f64> {
    let opts = QuadOptions::rel(1e-13);
    let split = 0.5 * PI;
    let head = quadrature::origin_singular(
        |x: f64| one_minus_cos(x) * x.powf(-1.0 - 2.0 * alpha),
        split,
        1.0 - 2.0 * alpha,
        opts,
    )?;
    // ∫_{π/2}^∞ x^{-1-2α} in closed form, the cosine part by the oscillatory tail rule
    let plain = split.powf(-2.0 * alpha) / (2.0 * alpha);
    let osc = quadrature::cos_tail(|x: f64| x.powf(-1.0 - 2.0 * alpha), split, opts)?;
    Ok(head.value + plain - osc.value)
}

/// `∫_0^{π/2} cos^p θ sin^{d-2} θ dθ` by quadrature.
pub fn angular_moment(p: f64, d: usize) -> Result<f64> {
    // θ = π/2 - φ puts the cos^p endpoint behaviour at the origin
    let k = d as f64 - 2.0;
    let r = quadrature::origin_singular(
        |phi: f64| phi.sin().powf(p) * phi.cos().powf(k),
        0.5 * PI,
        p,
        QuadOptions::rel(1e-13),
    )?;
    Ok(r.value)
}

/// `∫_0^π sin^{d-2} θ dθ`, the normalizer of the sphere measure written in
/// the polar angle.
pub fn polar_normalizer(d: usize) -> f64 {
    let k = d as f64 - 2.0;
    PI.sqrt() * special::gamma(0.5 * (k + 1.0)) / special::gamma(0.5 * k + 1.0)
}

/// `∫_0^∞ ρ^{d-1} (ρ² + m²)^{-d/2-α} dρ` by quadrature.
pub fn radial_mass(d: usize, alpha: f64, m: f64) -> Result<f64> {
    let df = d as f64;
    let g = |x: f64| x.powf(df - 1.0) * (x * x + m * m).powf(-0.5 * df - alpha);
    let opts = QuadOptions::rel(1e-13);
    let head = quadrature::adaptive(g, 0.0, m, opts)?;
    let tail = quadrature::power_tail(g, m, 1.0 + 2.0 * alpha, opts)?;
    Ok(head.value + tail.value)
}

/// Spectral amplitude `a + b` giving the requested `Tr C(0)`.
fn spectral_scale(params: &ModelParams) -> Result<f64> {
    Ok(params.trace_c0 / radial_mass(params.d, params.alpha, params.m)?)
}

/// All derived constants; α₁ and (in full mode) c come from quadrature.
pub fn derived_constants(params: &ModelParams) -> Result<DerivedConstants> {
    params.validate()?;
    let ModelParams { d, alpha, eta, .. } = *params;
    let df = d as f64;
    let beta = beta(d, alpha, eta);
    let omega = 2.0 / polar_normalizer(d);
    let alpha1 = omega * cosine_moment(alpha)? * angular_moment(2.0 * alpha, d)?;
    let c = match params.kernel_mode {
        KernelMode::SelfSimilar => params.self_similar_c,
        KernelMode::FullKraichnan => {
            let ab = spectral_scale(params)?;
            alpha1 * ab * (2.0 * alpha + 1.0 - 2.0 * alpha * eta) / (df + 2.0 * alpha)
        }
    };
    let delta_star = delta_star(d, alpha, eta);
    let base = c * (2.0 - 2.0 * alpha) * (1.0 - 2.0 * alpha + beta * (df - 1.0));
    let k_ric = if base > 0.0 {
        0.5 * base.powf(1.0 / (1.0 - alpha))
    } else {
        0.0
    };
    Ok(DerivedConstants {
        c,
        beta,
        alpha1,
        delta_star,
        c_tilde: df * (1.0 - alpha) * c,
        k_ric,
        b_n0: params.trace_c0 / df,
        d,
        alpha,
    })
}

/// Closed-form dissipation constant for the divergence-free (η = 1) kernel:
/// `c̃ = d/(d+2α) · Tr C(0) · K₁ · K₂(α)` with `K₁ = m^{2α}/√π` and
/// `K₂ = (1-α) cos(απ) Γ(1-2α) Γ(α+1/2) / Γ(α+1)`.
///
/// The product `cos(απ)Γ(1-2α)` is evaluated in reflected form, which is
/// finite at α = 1/2.
pub fn dissipation_constant_closed_form(
    alpha: f64,
    d: usize,
    trace_c0: f64,
    m: f64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if d < 2 {
        return Err(invalid(format!("d must be at least 2, got {d}")));
    }
    let df = d as f64;
    let k1 = m.powf(2.0 * alpha) / PI.sqrt();
    let k2 = (1.0 - alpha) * special::cos_gamma_reflected(alpha) * special::gamma(alpha + 0.5)
        / special::gamma(alpha + 1.0);
    Ok(df / (df + 2.0 * alpha) * trace_c0 * k1 * k2)
}

/// Limits of [`dissipation_constant_closed_form`] as α → 0 and α → 1.
pub fn dissipation_constant_limits(d: usize, trace_c0: f64, m: f64) -> (f64, f64) {
    // K₁·√π = m^{2α} tends to 1 and m² at the two ends
    let df = d as f64;
    (trace_c0, df / (df + 2.0) * trace_c0 * m * m / 4.0)
}

/// JSON-facing summary of the constants and regime.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub c: f64,
    pub beta: f64,
    pub alpha1: f64,
    pub delta_star: f64,
    pub c_tilde: f64,
    pub k_ric: f64,
    #[serde(rename = "bN0")]
    pub b_n0: f64,
    pub regime: Regime,
}

impl ConstantsReport {
    pub fn new(k: &DerivedConstants, regime: Regime) -> Self {
        Self {
            c: k.c,
            beta: k.beta,
            alpha1: k.alpha1,
            delta_star: k.delta_star,
            c_tilde: k.c_tilde,
            k_ric: k.k_ric,
            b_n0: k.b_n0,
            regime,
        }
    }
}

/// Structure functions and their radial derivatives at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialCoefficients {
    pub b_l: f64,
    pub b_n: f64,
    pub b_l_prime: f64,
    pub b_n_prime: f64,
}

#[derive(Debug, Clone)]
enum Profile {
    Power { c: f64, beta: f64 },
    Table(Box<Table>),
    Zero,
}

#[derive(Debug, Clone)]
struct Table {
    ln_r_min: f64,
    ln_r_max: f64,
    ln_bl: MonotoneCubic,
    ln_bn: MonotoneCubic,
}

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// The isotropic covariance of the Kraichnan noise.
///
/// Immutable after construction; the full-mode table is built eagerly.
#[derive(Debug, Clone)]
pub struct IsotropicKernel {
    params: ModelParams,
    constants: DerivedConstants,
    profile: Profile,
    spectral_a: f64,
    spectral_b: f64,
    rel_tol: f64,
}

impl IsotropicKernel {
    /// Builds the kernel with the default quadrature tolerance (1e-8).
    pub fn new(params: ModelParams) -> Result<Self> {
        Self::with_tolerance(params, 1e-8)
    }

    pub fn with_tolerance(params: ModelParams, rel_tol: f64) -> Result<Self> {
        let constants = derived_constants(&params)?;
        let (spectral_a, spectral_b) = match params.kernel_mode {
            KernelMode::FullKraichnan => {
                let s = spectral_scale(&params)?;
                ((1.0 - params.eta) * s, params.eta * s)
            }
            KernelMode::SelfSimilar => (0.0, 0.0),
        };
        let mut kernel = Self {
            params,
            constants,
            profile: Profile::Power {
                c: constants.c,
                beta: constants.beta,
            },
            spectral_a,
            spectral_b,
            rel_tol,
        };
        if params.kernel_mode == KernelMode::FullKraichnan {
            kernel.profile = Profile::Table(Box::new(kernel.tabulate()?));
        }
        Ok(kernel)
    }

    /// A kernel with `b_L = b_N ≡ 0`; only the `κ`-viscosity acts. Useful as a
    /// heat-equation control.
    pub fn zero(d: usize, trace_c0: f64) -> Result<Self> {
        let mut params = ModelParams::self_similar(d, 0.5, 1.0, 1.0);
        params.trace_c0 = trace_c0;
        let mut constants = derived_constants(&params)?;
        constants.c = 0.0;
        constants.c_tilde = 0.0;
        constants.k_ric = 0.0;
        Ok(Self {
            params,
            constants,
            profile: Profile::Zero,
            spectral_a: 0.0,
            spectral_b: 0.0,
            rel_tol: 0.0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.constants
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    pub fn c0(&self) -> f64 {
        self.params.c0()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Zero)
    }

    /// `(b_L(r), b_N(r))`, validating `r ≥ 0`.
    pub fn structure_coefficients(&self, r: f64) -> Result<(f64, f64)> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(invalid(format!(
                "radius must be finite and nonnegative, got {r}"
            )));
        }
        let k = self.coefficients(r);
        Ok((k.b_l, k.b_n))
    }

    /// Structure functions and derivatives at `r ≥ 0` (unchecked fast path).
    pub fn coefficients(&self, r: f64) -> RadialCoefficients {
        if r <= 0.0 {
            return RadialCoefficients {
                b_l: 0.0,
                b_n: 0.0,
                b_l_prime: 0.0,
                b_n_prime: 0.0,
            };
        }
        let two_a = 2.0 * self.params.alpha;
        match &self.profile {
            Profile::Zero => RadialCoefficients {
                b_l: 0.0,
                b_n: 0.0,
                b_l_prime: 0.0,
                b_n_prime: 0.0,
            },
            Profile::Power { c, beta } => {
                let p = r.powf(two_a);
                let b_l = c * p;
                let b_n = beta * b_l;
                RadialCoefficients {
                    b_l,
                    b_n,
                    b_l_prime: two_a * b_l / r,
                    b_n_prime: two_a * b_n / r,
                }
            }
            Profile::Table(t) => {
                let u = r.ln();
                if u < t.ln_r_min {
                    let (l0, _) = t.ln_bl.eval_with_derivative(t.ln_r_min);
                    let (n0, _) = t.ln_bn.eval_with_derivative(t.ln_r_min);
                    let scale = (two_a * (u - t.ln_r_min)).exp();
                    let b_l = l0.exp() * scale;
                    let b_n = n0.exp() * scale;
                    return RadialCoefficients {
                        b_l,
                        b_n,
                        b_l_prime: two_a * b_l / r,
                        b_n_prime: two_a * b_n / r,
                    };
                }
                if u > t.ln_r_max && !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                    log::warn!(
                        "kernel queried at r = {r:.3e} beyond the tabulated range; clamping to r = {:.3e}",
                        t.ln_r_max.exp()
                    );
                }
                let (l, dl) = t.ln_bl.eval_with_derivative(u);
                let (n, dn) = t.ln_bn.eval_with_derivative(u);
                let b_l = l.exp();
                let b_n = n.exp();
                let outside = u > t.ln_r_max;
                RadialCoefficients {
                    b_l,
                    b_n,
                    b_l_prime: if outside { 0.0 } else { b_l * dl / r },
                    b_n_prime: if outside { 0.0 } else { b_n * dn / r },
                }
            }
        }
    }

    /// `Q(z) = b_L ẑ⊗ẑ + b_N (I - ẑ⊗ẑ)` as a row-major `d × d` matrix.
    pub fn q_matrix(&self, z: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.params.d;
        if z.len() != d {
            return Err(invalid(format!(
                "z has {} components, expected {d}",
                z.len()
            )));
        }
        let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut q = vec![vec![0.0; d]; d];
        if r == 0.0 {
            return Ok(q);
        }
        let (bl, bn) = self.structure_coefficients(r)?;
        for i in 0..d {
            for j in 0..d {
                let proj = z[i] * z[j] / (r * r);
                let id = if i == j { 1.0 } else { 0.0 };
                q[i][j] = bl * proj + bn * (id - proj);
            }
        }
        Ok(q)
    }

    /// Smallest of `b_L`, `b_N` over `n_samples` log-spaced radii in `[r0, r1]`.
    pub fn ellipticity_floor(&self, r0: f64, r1: f64, n_samples: usize) -> Result<f64> {
        if !(r0 > 0.0) {
            return Err(invalid(format!("r0 must be positive, got {r0}")));
        }
        if r1 < r0 {
            return Err(invalid(format!("need r0 <= R, got r0 = {r0}, R = {r1}")));
        }
        if n_samples == 0 {
            return Err(invalid("n_samples must be at least 1"));
        }
        let n = if r1 == r0 { 1 } else { n_samples.max(2) };
        let mut floor = f64::INFINITY;
        for k in 0..n {
            let r = if n == 1 {
                r0
            } else {
                r0 * (r1 / r0).powf(k as f64 / (n - 1) as f64)
            };
            let (bl, bn) = self.structure_coefficients(r)?;
            floor = floor.min(bl.min(bn));
        }
        Ok(floor)
    }

    /// Full-mode structure functions evaluated directly by nested quadrature
    /// (no table). In other modes this equals [`Self::structure_coefficients`].
    pub fn direct_coefficients(&self, r: f64) -> Result<(f64, f64)> {
        if self.params.kernel_mode != KernelMode::FullKraichnan || self.is_zero() {
            return self.structure_coefficients(r);
        }
        if !(r >= 0.0) {
            return Err(invalid(format!("radius must be nonnegative, got {r}")));
        }
        if r == 0.0 {
            return Ok((0.0, 0.0));
        }
        let inner_tol = (self.rel_tol * 1e-2).max(1e-13);
        let (d, alpha) = (self.params.d, self.params.alpha);
        full_structure_functions(
            &self.params,
            self.spectral_a,
            self.spectral_b,
            r,
            self.rel_tol,
            |s| radial_profile_integral(d, alpha, s, inner_tol),
        )
    }

    fn tabulate(&self) -> Result<Table> {
        let m = self.params.m;
        let ln_lo = (TABLE_LO / m).ln();
        let ln_hi = (TABLE_HI / m).ln();
        let grid: Vec<f64> = (0..TABLE_SIZE)
            .map(|i| ln_lo + (ln_hi - ln_lo) * i as f64 / (TABLE_SIZE - 1) as f64)
            .collect();
        let inner_tol = (self.rel_tol * 1e-2).max(1e-13);
        let profile = ProfileTable::build(self.params.d, self.params.alpha, TABLE_HI, inner_tol)?;
        let values: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|u| {
                full_structure_functions(
                    &self.params,
                    self.spectral_a,
                    self.spectral_b,
                    u.exp(),
                    self.rel_tol,
                    |s| Ok(profile.eval(s)),
                )
            })
            .collect::<Result<_>>()?;
        let ln_bl = values.iter().map(|v| v.0.ln()).collect();
        let ln_bn = values.iter().map(|v| v.1.ln()).collect();
        Ok(Table {
            ln_r_min: ln_lo,
            ln_r_max: ln_hi,
            ln_bl: MonotoneCubic::new(grid.clone(), ln_bl)?,
            ln_bn: MonotoneCubic::new(grid, ln_bn)?,
        })
    }
}

/// `H(s) = ∫_0^∞ (1 - cos x) x^{d-1} (x² + s²)^{-d/2-α} dx` for `s ≥ 0`.
fn radial_profile_integral(d: usize, alpha: f64, s: f64, rel_tol: f64) -> Result<f64> {
    let df = d as f64;
    let expo = -0.5 * df - alpha;
    let g = |x: f64| x.powf(df - 1.0) * (x * x + s * s).powf(expo);
    let opts = QuadOptions {
        rel_tol,
        abs_tol: 0.0,
        max_subdivisions: 4000,
    };
    let periods = ((s / (2.0 * PI)).ceil() as usize).max(8);
    let a = 2.0 * PI * periods as f64;
    let mut f = |x: f64| one_minus_cos(x) * g(x);
    let mut head = if s == 0.0 {
        quadrature::origin_singular(&mut f, 2.0 * PI, 1.0 - 2.0 * alpha, opts)?.value
    } else {
        // the integrand turns from x^{d+1} s^{-d-2α} into x^{1-2α} near x = s
        let mut points = vec![0.0];
        let mut x = s.max(1e-12);
        while x < 2.0 * PI {
            points.push(x);
            x *= 2.0;
        }
        points.push(2.0 * PI);
        quadrature::adaptive_with_breaks(&mut f, &points, opts)?.value
    };
    let breaks: Vec<f64> = (1..=periods).map(|k| 2.0 * PI * k as f64).collect();
    head += quadrature::adaptive_with_breaks(&mut f, &breaks, opts)?.value;
    let plain = quadrature::power_tail(g, a, 1.0 + 2.0 * alpha, opts)?.value;
    let osc = quadrature::cos_tail(g, a, opts)?.value;
    Ok(head + plain - osc)
}

/// `D(s) = H(0) - H(s)` written with a cancellation-free integrand; used for
/// `s ≤ 1`, where the difference is tiny compared with `H(0)`.
fn profile_deficit(d: usize, alpha: f64, s: f64, rel_tol: f64) -> Result<f64> {
    let df = d as f64;
    let lam = 0.5 * df + alpha;
    let w = |x: f64| x.powf(-1.0 - 2.0 * alpha) * -(-lam * (s * s / (x * x)).ln_1p()).exp_m1();
    let opts = QuadOptions {
        rel_tol,
        abs_tol: 0.0,
        max_subdivisions: 4000,
    };
    let a = 16.0 * PI;
    let mut f = |x: f64| one_minus_cos(x) * w(x);
    let mut total = quadrature::origin_singular(&mut f, s, 1.0 - 2.0 * alpha, opts)?.value;
    let mut points = vec![s];
    let mut x = 2.0 * s;
    while x < 2.0 * PI {
        points.push(x);
        x *= 2.0;
    }
    points.extend((1..=8).map(|k| 2.0 * PI * k as f64));
    total += quadrature::adaptive_with_breaks(&mut f, &points, opts)?.value;
    total += quadrature::power_tail(w, a, 3.0 + 2.0 * alpha, opts)?.value;
    total -= quadrature::cos_tail(w, a, opts)?.value;
    Ok(total)
}

/// Tabulated `H(s)`.
///
/// For `s ≤ 1` the table holds `ln G` with `H(s) = H(0) - s^{2-2α} G(s)`;
/// `G` tends to a constant as `s → 0`, so the small-`s` behaviour of `H` is
/// captured exactly. For `s > 1` it holds `ln H` itself. Both are sampled
/// uniformly in `ln s` and read back by four-point Lagrange interpolation.
#[derive(Debug, Clone)]
struct ProfileTable {
    h0: f64,
    expo: f64,
    low: UniformLog,
    high: UniformLog,
}

#[derive(Debug, Clone)]
struct UniformLog {
    ln_s0: f64,
    step: f64,
    values: Vec<f64>,
}

impl UniformLog {
    fn build<F: Fn(f64) -> Result<f64> + Sync>(
        s_lo: f64,
        s_hi: f64,
        step: f64,
        f: F,
    ) -> Result<Self> {
        let ln_s0 = s_lo.ln() - step;
        let n = ((s_hi.ln() - ln_s0) / step).ceil() as usize + 3;
        let values = (0..n)
            .into_par_iter()
            .map(|i| f((ln_s0 + step * i as f64).exp()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            ln_s0,
            step,
            values,
        })
    }

    fn eval(&self, ln_s: f64) -> f64 {
        let n = self.values.len();
        let t = ((ln_s - self.ln_s0) / self.step).max(0.0);
        let i = (t.floor() as usize).clamp(1, n - 3);
        let u = t - i as f64;
        let y = &self.values[i - 1..i + 3];
        // Lagrange weights for nodes -1, 0, 1, 2
        let w0 = -u * (u - 1.0) * (u - 2.0) / 6.0;
        let w1 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
        let w2 = -(u + 1.0) * u * (u - 2.0) / 2.0;
        let w3 = (u + 1.0) * u * (u - 1.0) / 6.0;
        w0 * y[0] + w1 * y[1] + w2 * y[2] + w3 * y[3]
    }
}

impl ProfileTable {
    const S_MIN: f64 = 1e-8;
    const STEP: f64 = 0.02;

    fn build(d: usize, alpha: f64, s_max: f64, rel_tol: f64) -> Result<Self> {
        let h0 = cosine_moment(alpha)?;
        let expo = 2.0 - 2.0 * alpha;
        let low = UniformLog::build(Self::S_MIN, 1.0, Self::STEP, |s| {
            Ok((profile_deficit(d, alpha, s, rel_tol)? / s.powf(expo)).ln())
        })?;
        let high = UniformLog::build(1.0, s_max.max(2.0), Self::STEP, |s| {
            Ok(radial_profile_integral(d, alpha, s, rel_tol)?.ln())
        })?;
        Ok(Self {
            h0,
            expo,
            low,
            high,
        })
    }

    fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.h0;
        }
        let ln_s = s.ln();
        if s <= 1.0 {
            self.h0 - s.powf(self.expo) * self.low.eval(ln_s).exp()
        } else {
            self.high.eval(ln_s).exp()
        }
    }
}

fn full_structure_functions<H: Fn(f64) -> Result<f64>>(
    params: &ModelParams,
    spectral_a: f64,
    spectral_b: f64,
    r: f64,
    rel_tol: f64,
    profile: H,
) -> Result<(f64, f64)> {
    let d = params.d;
    let alpha = params.alpha;
    let m = params.m;
    let k = d as f64 - 2.0;
    let norm = 2.0 / polar_normalizer(d);
    let opts = QuadOptions {
        rel_tol,
        abs_tol: 0.0,
        max_subdivisions: 2000,
    };
    let mut failure: Option<Error> = None;
    // φ = π/2 - θ, so u₁ = cos θ = sin φ and the (u₁ r)^{2α} factor sits at φ = 0
    let mut weighted = |w: fn(f64) -> f64| -> Result<f64> {
        let res = quadrature::origin_singular(
            |phi: f64| {
                let u1 = phi.sin();
                let h = match profile(r * m * u1) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                };
                w(u1) * phi.cos().powf(k) * (r * u1).powf(2.0 * alpha) * h
            },
            0.5 * PI,
            2.0 * alpha,
            opts,
        )?;
        Ok(norm * res.value)
    };
    let i1 = weighted(|_| 1.0)?;
    let i2 = weighted(|u| u * u)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let dm1 = d as f64 - 1.0;
    let perp = (i1 - i2) / dm1;
    let b_l = spectral_b / dm1 * (i1 - i2) + spectral_a * i2;
    let b_n = spectral_b / dm1 * (i1 - perp) + spectral_a * perp;
    Ok((b_l, b_n))
}
