//! Radial two-point correlation equation.
//!
//! The isotropic correlation `f(t, r)` evolves by
//!
//! ```text
//! ∂_t f = B_L f'' + (d-1) B_N f'/r,   B_{L,N} = (1-κ) b_{L,N} + 2 c0 κ,
//! ```
//!
//! with `f'(t, 0) = 0`. The operator is discretized in Sturm–Liouville form
//! `L f = (1/w) (ρ f')'`, where `ρ'/ρ = (d-1) B_N / (r B_L)` and `w = ρ / B_L`,
//! by a vertex-centred finite-volume scheme on a graded grid. Cell weights
//! are integrals of `w`, so the origin cell carries `∫_0^{r_1/2} w`, which is
//! infinite exactly when the particles coalesce (κ = 0 and
//! `(d-1)β + 1 - 2α ≤ 0`); the origin value is then frozen and energy is
//! conserved. In the diffusive regime the same integral is finite and the
//! energy `f(t, 0)` decays.
//!
//! Face conductances use the flux shape of a uniformly decaying inner
//! solution, `ρ f' ∝ Ω(r) = ∫_0^r w`, which is exact for the quasi-steady
//! boundary layer at the origin and reduces to the usual two-point flux away
//! from it.
//!
//! In `continuity_divfree` mode (η = 1) the same operator is written in
//! conservative form with `ρ = r^{d-1} B_L`, `w = r^{d-1}`, so the discrete
//! mass `ω_{d-1} Σ W_i f_i` is conserved exactly under a zero-flux outer
//! boundary.

use crate::error::{invalid, Error, Result};
use crate::interp::MonotoneCubic;
use crate::kernels::IsotropicKernel;
use crate::quadrature::{self, GaussLegendre, QuadOptions};
use crate::scaling::ols;
use crate::special;
use crate::tridiag::Tridiagonal;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Hard cap on the number of grid nodes.
pub const MAX_NODES: usize = 1_000_000;
/// Minimum number of grid nodes.
pub const MIN_NODES: usize = 64;

/// Graded radial grid `0 = r_0 < r_1 = h_min < ... < r_N = R_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub nodes: Vec<f64>,
    pub h_min: f64,
    pub growth: f64,
    pub r_max: f64,
}

impl RadialGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Spacing of the last interval.
    pub fn last_spacing(&self) -> f64 {
        let n = self.nodes.len();
        self.nodes[n - 1] - self.nodes[n - 2]
    }

    /// Evaluates `f` on the nodes.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }
}

/// Geometric grid whose spacing starts at `h_min` and grows by `growth` per
/// node until it reaches `R_max / 150`, then stays uniform.
pub fn build_grid(h_min: f64, r_max: f64, growth: f64) -> Result<RadialGrid> {
    build_grid_with_cap(h_min, r_max, growth, r_max / 150.0)
}

/// [`build_grid`] with an explicit spacing cap.
pub fn build_grid_with_cap(h_min: f64, r_max: f64, growth: f64, cap: f64) -> Result<RadialGrid> {
    if !(h_min > 0.0 && h_min < r_max && r_max.is_finite()) {
        return Err(invalid(format!(
            "grid needs 0 < h_min < R_max, got h_min = {h_min}, R_max = {r_max}"
        )));
    }
    if !(growth > 1.0 && growth <= 1.1) {
        return Err(invalid(format!(
            "grid growth must lie in (1, 1.1], got {growth}"
        )));
    }
    let cap = cap.max(h_min);
    // count before allocating
    let ln_g = growth.ln();
    let k_cap = ((cap / h_min).ln() / ln_g).ceil();
    let geometric_len = h_min * (growth.powf(k_cap) - 1.0) / (growth - 1.0);
    let estimate = if geometric_len >= r_max {
        (1.0 + r_max * (growth - 1.0) / h_min).ln() / ln_g
    } else {
        k_cap + (r_max - geometric_len) / cap
    };
    if !(estimate + 2.0 <= MAX_NODES as f64) {
        return Err(invalid(format!(
            "grid would need about {estimate:.3e} nodes, above the cap of {MAX_NODES}"
        )));
    }
    let mut nodes = vec![0.0];
    let mut r = 0.0;
    let mut h = h_min;
    loop {
        if r + h >= r_max - 0.5 * h {
            break;
        }
        r += h;
        nodes.push(r);
        h = (h * growth).min(cap);
    }
    nodes.push(r_max);
    if nodes.len() < MIN_NODES {
        return Err(invalid(format!(
            "grid has {} nodes, fewer than the minimum of {MIN_NODES}",
            nodes.len()
        )));
    }
    Ok(RadialGrid {
        nodes,
        h_min,
        growth,
        r_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Transport,
    ContinuityDivfree,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transport" => Ok(Self::Transport),
            "continuity_divfree" => Ok(Self::ContinuityDivfree),
            other => Err(invalid(format!(
                "unknown mode {other:?} (expected transport or continuity_divfree)"
            ))),
        }
    }
}

/// Outer boundary condition at `R_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBc {
    /// `f(R_max)` frozen at its initial value (zero for decaying data).
    DirichletZero,
    /// Zero flux through `R_max`.
    HomogeneousNeumann,
}

impl std::str::FromStr for OuterBc {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet_zero" => Ok(Self::DirichletZero),
            "homogeneous_neumann" => Ok(Self::HomogeneousNeumann),
            other => Err(invalid(format!(
                "unknown outer boundary condition {other:?} (expected dirichlet_zero or homogeneous_neumann)"
            ))),
        }
    }
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    /// Viscosity parameter κ ∈ [0, 1/2).
    pub kappa: f64,
    pub mode: Mode,
    /// Time-stepping weight θ ∈ [1/2, 1]; 1 is backward Euler.
    pub theta: f64,
    pub outer_bc: OuterBc,
    /// Step size is `min(dt_max, max(dt_min, dt_rel * t))`.
    pub dt_max: f64,
    pub dt_min: f64,
    pub dt_rel: f64,
    /// Times at which observables and profiles are recorded (t = 0 is always
    /// recorded; `t_end` is appended if missing).
    pub observable_times: Vec<f64>,
    /// Offset δ of the seminorm exponents `2 - 2α ∓ δ`.
    pub seminorm_delta: f64,
    /// Radius `l` of the increment seminorms.
    pub seminorm_l: f64,
    /// Window `[r_lo, r_hi]` of the singular-amplitude fit; defaults to
    /// `[5 h_min, 0.05 correlation_length]`.
    pub fit_window: Option<(f64, f64)>,
    pub correlation_length: f64,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            kappa: 0.0,
            mode: Mode::Transport,
            theta: 1.0,
            outer_bc: OuterBc::DirichletZero,
            dt_max: 1e-2,
            dt_min: 1e-8,
            dt_rel: 1e-3,
            observable_times: Vec::new(),
            seminorm_delta: 0.05,
            seminorm_l: 0.1,
            fit_window: None,
            correlation_length: 1.0,
        }
    }
}

impl PdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.kappa) {
            return Err(invalid(format!(
                "kappa must lie in [0, 1/2), got {}",
                self.kappa
            )));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(invalid(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_rel > 0.0) {
            return Err(invalid(
                "time steps need 0 < dt_min <= dt_max and dt_rel > 0",
            ));
        }
        if self
            .observable_times
            .iter()
            .any(|t| !(*t >= 0.0 && t.is_finite()))
        {
            return Err(invalid("observable times must be finite and nonnegative"));
        }
        if !(self.seminorm_delta > 0.0 && self.seminorm_l > 0.0 && self.correlation_length > 0.0) {
            return Err(invalid(
                "seminorm_delta, seminorm_l and correlation_length must be positive",
            ));
        }
        if let Some((lo, hi)) = self.fit_window {
            if !(lo > 0.0 && hi > lo) {
                return Err(invalid(format!(
                    "fit window must satisfy 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }

    /// Fit window for a given grid.
    pub fn window(&self, grid: &RadialGrid) -> (f64, f64) {
        self.fit_window
            .unwrap_or((5.0 * grid.h_min, 0.05 * self.correlation_length))
    }
}

/// `n_per_decade` log-spaced times from `t_first` to `t_end` (both included).
pub fn geometric_schedule(t_first: f64, t_end: f64, n_per_decade: usize) -> Vec<f64> {
    assert!(t_first > 0.0 && t_end >= t_first && n_per_decade > 0);
    let decades = (t_end / t_first).log10();
    let n = (decades * n_per_decade as f64).round().max(1.0) as usize;
    (0..=n)
        .map(|k| t_first * (t_end / t_first).powf(k as f64 / n as f64))
        .collect()
}

/// The correlation function at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub t: f64,
    pub values: Vec<f64>,
}

impl RadialProfile {
    pub fn energy(&self) -> f64 {
        self.values[0]
    }
}

/// Result of a singular-amplitude fit `f(0) - f(r) ≈ A r^γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularFit {
    /// Amplitude with the exponent held at the requested γ.
    pub amplitude: f64,
    /// Exponent of the free log-log fit.
    pub exponent: f64,
    /// Amplitude of the free fit.
    pub amplitude_free: f64,
    pub n_points: usize,
}

/// A completed run with its recorded observables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeRun {
    pub grid: RadialGrid,
    pub config: PdeConfig,
    /// `2 - 2α` for the kernel used.
    pub gamma: f64,
    /// Whether the origin value was frozen (infinite origin weight).
    pub origin_frozen: bool,
    pub times: Vec<f64>,
    pub profiles: Vec<RadialProfile>,
    /// `f(t, 0)`.
    pub energy: Vec<f64>,
    /// Increment seminorm at exponent `γ - δ`.
    pub seminorm_minus: Vec<f64>,
    /// Increment seminorm at exponent `γ + δ`.
    pub seminorm_plus: Vec<f64>,
    /// Singular amplitude `A_t` (NaN where the fit is not defined).
    pub amplitude: Vec<f64>,
    /// Free-fit exponent of `f(t,0) - f(t,r)` on the fit window.
    pub amplitude_exponent: Vec<f64>,
    /// `ω_{d-1} Σ V_i f_i` with `V_i` the cell volumes `∫ r^{d-1} dr`.
    pub mass: Vec<f64>,
    /// Flux `ρ f'` through the outer boundary, normalized by the origin weight
    /// scale (diagnostic for the truncation).
    pub boundary_flux: Vec<f64>,
    pub steps: usize,
}

impl PdeRun {
    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    /// Index of the recorded sample closest to `t`.
    pub fn sample_index(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    /// Singular amplitude of the sample closest to `t`.
    pub fn singular_amplitude(
        &self,
        t: f64,
        gamma: f64,
        window: (f64, f64),
    ) -> Result<SingularFit> {
        let k = self.sample_index(t);
        singular_amplitude(&self.grid.nodes, &self.profiles[k].values, gamma, window)
    }
}

/// `sup_{0 < r_i < l} |f(r_i) - f(0)| / r_i^γ` over the grid nodes.
pub fn increment_seminorm(nodes: &[f64], values: &[f64], gamma: f64, l: f64) -> f64 {
    let f0 = values[0];
    nodes
        .iter()
        .zip(values)
        .skip(1)
        .take_while(|(r, _)| **r < l)
        .map(|(r, v)| (v - f0).abs() / r.powf(gamma))
        .fold(0.0, f64::max)
}

/// Fits `f(0) - f(r) ≈ A r^γ` on the nodes inside `window`.
///
/// Returns the amplitude with γ held fixed, plus a free log-log fit for
/// diagnostics. Differences must be positive and nondecreasing in the
/// window.
pub fn singular_amplitude(
    nodes: &[f64],
    values: &[f64],
    gamma: f64,
    window: (f64, f64),
) -> Result<SingularFit> {
    let f0 = values[0];
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut prev = 0.0;
    for (r, v) in nodes.iter().zip(values).skip(1) {
        if *r < lo || *r > hi {
            continue;
        }
        let diff = f0 - v;
        if !(diff > 0.0) {
            return Err(Error::Fit(format!(
                "non-positive difference f(0) - f(r) = {diff:e} at r = {r:e}"
            )));
        }
        if diff < prev {
            return Err(Error::Fit(format!("non-monotone differences at r = {r:e}")));
        }
        prev = diff;
        xs.push(r.ln());
        ys.push(diff.ln());
    }
    if xs.len() < 4 {
        return Err(Error::Fit(format!(
            "only {} grid nodes inside the fit window [{lo:e}, {hi:e}]",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let ln_a = xs.iter().zip(&ys).map(|(x, y)| y - gamma * x).sum::<f64>() / n;
    let free = ols(&xs, &ys)?;
    Ok(SingularFit {
        amplitude: ln_a.exp(),
        exponent: free.slope,
        amplitude_free: free.intercept.exp(),
        n_points: xs.len(),
    })
}

/// Effective coefficients `(B_L, B_N)` including the viscosity.
#[derive(Clone)]
struct Coefficients<'a> {
    kernel: &'a IsotropicKernel,
    kappa: f64,
    two_c0: f64,
    d: f64,
    mode: Mode,
}

impl Coefficients<'_> {
    fn at(&self, r: f64) -> (f64, f64) {
        let k = self.kernel.coefficients(r);
        let visc = self.two_c0 * self.kappa;
        (
            (1.0 - self.kappa) * k.b_l + visc,
            (1.0 - self.kappa) * k.b_n + visc,
        )
    }

    /// `d ln ρ / d ln r` (transport form).
    fn log_slope(&self, r: f64) -> f64 {
        let (bl, bn) = self.at(r);
        (self.d - 1.0) * bn / bl
    }
}

/// `ln ρ`, `ln w` and `ln Ω` as smooth functions of `ln r`, tabulated on a
/// fine uniform grid that extends far below `r_1`.
struct SturmLiouville<'a> {
    coef: Coefficients<'a>,
    s0: f64,
    ln_rho: MonotoneCubic,
    /// `None` when `∫_0 w` diverges (frozen origin).
    ln_omega: Option<MonotoneCubic>,
    /// Local exponent `q` with `w ~ r^{q-1}` at the bottom of the table.
    q_bottom: f64,
}

const AUX_STEP: f64 = 0.05;

impl<'a> SturmLiouville<'a> {
    fn new(coef: Coefficients<'a>, r1: f64, r_max: f64, gl: &GaussLegendre) -> Result<Self> {
        let table = Self::tabulate(&coef, r1, r_max, 40.0, gl)?;
        if table.ln_omega.is_none() || table.q_bottom * 40.0 >= 35.0 {
            return Ok(table);
        }
        // slowly converging origin integral: go deeper, keeping ρ representable
        let slope = coef.log_slope(r1 * (-40.0f64).exp()).max(1.0);
        let depth = (35.0 / table.q_bottom + 5.0)
            .min(200.0)
            .min(600.0 / slope)
            .max(40.0);
        Self::tabulate(&coef, r1, r_max, depth, gl)
    }

    fn tabulate(
        coef: &Coefficients<'a>,
        r1: f64,
        r_max: f64,
        depth: f64,
        gl: &GaussLegendre,
    ) -> Result<Self> {
        let s0 = r1.ln() - depth;
        let s_top = r_max.ln() + 2.0 * AUX_STEP;
        let n = ((s_top - s0) / AUX_STEP).ceil() as usize + 1;
        let s: Vec<f64> = (0..n).map(|j| s0 + AUX_STEP * j as f64).collect();
        let dm1 = coef.d - 1.0;
        let ln_rho: Vec<f64> = match coef.mode {
            Mode::Transport => {
                let mut acc = 0.0;
                let mut out = Vec::with_capacity(n);
                out.push(0.0);
                for j in 1..n {
                    acc += gl.integrate(|u| coef.log_slope(u.exp()), s[j - 1], s[j]);
                    out.push(acc);
                }
                // reference ln ρ(r_1) = 0
                let shift = MonotoneCubic::new(s.clone(), out.clone())?.eval(r1.ln());
                out.iter().map(|v| v - shift).collect()
            }
            Mode::ContinuityDivfree => s
                .iter()
                .map(|&u| dm1 * u + coef.at(u.exp()).0.ln())
                .collect(),
        };
        let ln_rho_i = MonotoneCubic::new(s.clone(), ln_rho.clone())?;
        let ln_w = |u: f64| -> f64 {
            match coef.mode {
                Mode::Transport => ln_rho_i.eval(u) - coef.at(u.exp()).0.ln(),
                Mode::ContinuityDivfree => dm1 * u,
            }
        };
        // w ~ r^{q-1} near the bottom; integrability of w at 0 needs q > 0
        let q_bottom = 1.0 + (ln_w(s[1]) - ln_w(s[0])) / AUX_STEP;
        if q_bottom <= 1e-9 {
            return Ok(Self {
                coef: coef.clone(),
                s0,
                ln_rho: ln_rho_i,
                ln_omega: None,
                q_bottom,
            });
        }
        let mut omega = Vec::with_capacity(n);
        let mut acc = (ln_w(s[0]) + s[0]).exp() / q_bottom;
        omega.push(acc.ln());
        for j in 1..n {
            acc += gl.integrate(|u| (ln_w(u) + u).exp(), s[j - 1], s[j]);
            omega.push(acc.ln());
        }
        Ok(Self {
            coef: coef.clone(),
            s0,
            ln_rho: ln_rho_i,
            ln_omega: Some(MonotoneCubic::new(s, omega)?),
            q_bottom,
        })
    }

    fn rho(&self, r: f64) -> f64 {
        self.ln_rho.eval(r.ln()).exp()
    }

    fn w(&self, r: f64) -> f64 {
        match self.coef.mode {
            Mode::Transport => self.rho(r) / self.coef.at(r).0,
            Mode::ContinuityDivfree => r.powf(self.coef.d - 1.0),
        }
    }

    fn omega(&self, r: f64) -> f64 {
        self.ln_omega
            .as_ref()
            .map_or(f64::INFINITY, |t| t.eval(r.ln()).exp())
    }

    /// `∫_0^x Ω/ρ dr`, integrated in `ln r` over the table with a power-law
    /// head below it.
    fn omega_over_rho_from_origin(&self, x: f64, gl: &GaussLegendre) -> f64 {
        let f = |u: f64| {
            let r = u.exp();
            self.omega(r) / self.rho(r) * r
        };
        let sx = x.ln();
        let mut total = 0.0;
        let mut a = self.s0;
        while a < sx {
            let b = (a + AUX_STEP).min(sx);
            total += gl.integrate(f, a, b);
            a = b;
        }
        let s1 = self.s0 + AUX_STEP;
        let q = (f(s1) / f(self.s0)).ln() / AUX_STEP;
        if q > 0.0 {
            total += f(self.s0) / q;
        }
        total
    }
}

/// Discrete operator: `W_i df_i/dt = G_{i+½}(f_{i+1} - f_i) - G_{i-½}(f_i - f_{i-1})`.
struct Operator {
    weight: Vec<f64>,
    conductance: Vec<f64>,
    volume: Vec<f64>,
    origin_frozen: bool,
}

fn assemble(kernel: &IsotropicKernel, grid: &RadialGrid, config: &PdeConfig) -> Result<Operator> {
    let r = &grid.nodes;
    let n = r.len();
    let d = kernel.dim() as f64;
    let coef = Coefficients {
        kernel,
        kappa: config.kappa,
        two_c0: 2.0 * kernel.c0(),
        d,
        mode: config.mode,
    };
    if kernel.is_zero() && config.kappa == 0.0 {
        // no dynamics at all
        return Ok(Operator {
            weight: vec![1.0; n],
            conductance: vec![0.0; n - 1],
            volume: cell_volumes(r, d),
            origin_frozen: true,
        });
    }
    let gl = GaussLegendre::new(8);
    let sl = SturmLiouville::new(coef, r[1], grid.r_max, &gl)?;
    let mid: Vec<f64> = r.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    let origin_frozen = sl.ln_omega.is_none();

    let mut weight = vec![0.0; n];
    weight[0] = if origin_frozen {
        f64::INFINITY
    } else {
        sl.omega(mid[0])
    };
    for i in 1..n {
        let hi = if i + 1 < n { mid[i] } else { r[n - 1] };
        weight[i] = match config.mode {
            Mode::ContinuityDivfree => (hi.powf(d) - mid[i - 1].powf(d)) / d,
            Mode::Transport => gl.integrate(|x| sl.w(x), mid[i - 1], hi),
        };
    }

    let mut conductance = vec![0.0; n - 1];
    if origin_frozen {
        conductance[0] = sl.rho(mid[0]) / r[1];
        for i in 1..n - 1 {
            conductance[i] = 1.0 / gl.integrate(|x| 1.0 / sl.rho(x), r[i], r[i + 1]);
        }
    } else {
        conductance[0] = sl.omega(mid[0]) / sl.omega_over_rho_from_origin(r[1], &gl);
        for i in 1..n - 1 {
            let resistance = gl.integrate(|x| sl.omega(x) / sl.rho(x), r[i], r[i + 1]);
            conductance[i] = sl.omega(mid[i]) / resistance;
        }
    }
    if weight
        .iter()
        .skip(1)
        .chain(&conductance)
        .any(|v| !(v.is_finite() && *v > 0.0))
    {
        return Err(Error::Numerical(
            "non-positive or non-finite cell weight or conductance while assembling the radial operator".into(),
        ));
    }
    Ok(Operator {
        weight,
        conductance,
        volume: cell_volumes(r, d),
        origin_frozen,
    })
}

fn cell_volumes(r: &[f64], d: f64) -> Vec<f64> {
    let n = r.len();
    let mut v = vec![0.0; n];
    for i in 0..n {
        let lo = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
        let hi = if i + 1 < n {
            0.5 * (r[i] + r[i + 1])
        } else {
            r[n - 1]
        };
        v[i] = (hi.powf(d) - lo.powf(d)) / d;
    }
    v
}

impl Operator {
    fn flux_divergence(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        for v in out.iter_mut() {
            *v = 0.0;
        }
        for i in 0..n - 1 {
            let flux = self.conductance[i] * (f[i + 1] - f[i]);
            out[i] += flux;
            out[i + 1] -= flux;
        }
    }
}

/// Evolves `f0` to `t_end`, recording observables at the configured times.
pub fn evolve(
    kernel: &IsotropicKernel,
    grid: &RadialGrid,
    config: &PdeConfig,
    f0: &[f64],
    t_end: f64,
) -> Result<PdeRun> {
    config.validate()?;
    if f0.len() != grid.len() {
        return Err(invalid(format!(
            "initial profile has {} values for {} grid nodes",
            f0.len(),
            grid.len()
        )));
    }
    if f0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("initial profile must be finite"));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(format!("t_end must be positive, got {t_end}")));
    }
    if config.mode == Mode::ContinuityDivfree && kernel.params().eta != 1.0 {
        return Err(invalid(format!(
            "continuity_divfree mode requires eta = 1, got {}",
            kernel.params().eta
        )));
    }
    let op = assemble(kernel, grid, config)?;
    let n = grid.len();
    let dirichlet = config.outer_bc == OuterBc::DirichletZero;
    let gamma = if kernel.is_zero() {
        2.0
    } else {
        2.0 - 2.0 * kernel.params().alpha
    };
    let omega_sphere = special::sphere_area(kernel.dim());

    let mut schedule: Vec<f64> = config
        .observable_times
        .iter()
        .copied()
        .filter(|t| *t > 0.0 && *t < t_end)
        .collect();
    schedule.push(t_end);
    schedule.sort_by(f64::total_cmp);
    schedule.dedup();

    let mut run = PdeRun {
        grid: grid.clone(),
        config: config.clone(),
        gamma,
        origin_frozen: op.origin_frozen,
        times: Vec::new(),
        profiles: Vec::new(),
        energy: Vec::new(),
        seminorm_minus: Vec::new(),
        seminorm_plus: Vec::new(),
        amplitude: Vec::new(),
        amplitude_exponent: Vec::new(),
        mass: Vec::new(),
        boundary_flux: Vec::new(),
        steps: 0,
    };
    let window = config.window(grid);
    let record = |run: &mut PdeRun, t: f64, f: &[f64]| {
        let nodes = &grid.nodes;
        run.times.push(t);
        run.energy.push(f[0]);
        run.seminorm_minus.push(increment_seminorm(
            nodes,
            f,
            gamma - config.seminorm_delta,
            config.seminorm_l,
        ));
        run.seminorm_plus.push(increment_seminorm(
            nodes,
            f,
            gamma + config.seminorm_delta,
            config.seminorm_l,
        ));
        match singular_amplitude(nodes, f, gamma, window) {
            Ok(fit) => {
                run.amplitude.push(fit.amplitude);
                run.amplitude_exponent.push(fit.exponent);
            }
            Err(_) => {
                run.amplitude.push(f64::NAN);
                run.amplitude_exponent.push(f64::NAN);
            }
        }
        run.mass
            .push(omega_sphere * op.volume.iter().zip(f).map(|(v, x)| v * x).sum::<f64>());
        run.boundary_flux
            .push(op.conductance[n - 2] * (f[n - 1] - f[n - 2]));
        run.profiles.push(RadialProfile {
            t,
            values: f.to_vec(),
        });
    };

    let mut f = f0.to_vec();
    record(&mut run, 0.0, &f);
    let mut system = Tridiagonal::zeros(n);
    let mut rhs = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut scratch = Vec::new();
    let theta = config.theta;
    let mut t = 0.0;
    for &target in &schedule {
        while t < target {
            let mut dt = config.dt_max.min(config.dt_min.max(config.dt_rel * t));
            if t + 1.5 * dt >= target {
                dt = target - t;
            }
            op.flux_divergence(&f, &mut div);
            for i in 0..n {
                let frozen = (i == 0 && op.origin_frozen) || (i == n - 1 && dirichlet);
                if frozen {
                    system.lower[i] = 0.0;
                    system.upper[i] = 0.0;
                    system.diag[i] = 1.0;
                    rhs[i] = f[i];
                    continue;
                }
                let g_left = if i > 0 { op.conductance[i - 1] } else { 0.0 };
                let g_right = if i + 1 < n { op.conductance[i] } else { 0.0 };
                let m = op.weight[i] / dt;
                system.lower[i] = -theta * g_left;
                system.upper[i] = -theta * g_right;
                system.diag[i] = m + theta * (g_left + g_right);
                rhs[i] = m * f[i] + (1.0 - theta) * div[i];
            }
            if !system.is_diagonally_dominant(1e-12) {
                return Err(Error::Numerical(format!(
                    "implicit system lost diagonal dominance at t = {t:e}"
                )));
            }
            system.solve_into(&rhs, &mut next, &mut scratch)?;
            let check = system.apply(&next);
            let scale = rhs
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            let residual = check
                .iter()
                .zip(&rhs)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if !(residual <= 1e-9 * scale) || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "linear solve residual {residual:e} (scale {scale:e}) at t = {t:e}, dt = {dt:e}"
                )));
            }
            std::mem::swap(&mut f, &mut next);
            t += dt;
            run.steps += 1;
        }
        t = target;
        record(&mut run, t, &f);
    }
    Ok(run)
}

/// One row of the change-of-variables table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiRow {
    pub r: f64,
    pub xi: f64,
    pub dxi: f64,
    /// `c ∂_r ξ / r^{1-2α-δ}`, which tends to `c_ξ` as `r → 0`.
    pub ratio: f64,
}

/// Tabulates `ξ(r)` and `∂_r ξ(r)` with
/// `∂_r ξ(r) = ∫_0^r ρ^{-δ}/b_L(ρ) exp(-(d-1) ∫_ρ^r b_N/(b_L u) du) dρ`.
///
/// The ratio column is scaled by `c` so that it converges to
/// `c_ξ = 1/((d-1)β + 1 - 2α - δ)` for any normalization of the kernel.
pub fn xi_diagnostic(kernel: &IsotropicKernel, delta: f64, r_grid: &[f64]) -> Result<Vec<XiRow>> {
    let k = *kernel.constants();
    k.c_xi(delta)?;
    if kernel.is_zero() {
        return Err(invalid("the change of variables needs a nonzero kernel"));
    }
    if r_grid.is_empty()
        || r_grid.iter().any(|r| !(*r > 0.0))
        || r_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid("r_grid must be positive and strictly increasing"));
    }
    let d = kernel.dim() as f64;
    let alpha = kernel.params().alpha;
    let opts = QuadOptions::rel(1e-11);
    let ratio_of = |u: f64| {
        let c = kernel.coefficients(u);
        c.b_n / c.b_l
    };
    let dxi = |r: f64| -> Result<f64> {
        // in the variable x = ρ/r the integrand behaves like x^{(d-1)β-2α-δ} at 0
        let p = (d - 1.0) * k.beta - 2.0 * alpha - delta;
        let inner = |rho: f64| -> f64 {
            // ∫_ρ^r b_N/(b_L u) du in ln u; smooth, so a fixed panel rule suffices
            let (a, b) = (rho.ln(), r.ln());
            let panels = ((b - a) / 0.5).ceil().max(1.0) as usize;
            let h = (b - a) / panels as f64;
            let gl = GaussLegendre::new(8);
            (0..panels)
                .map(|j| {
                    gl.integrate(
                        |s| ratio_of(s.exp()),
                        a + h * j as f64,
                        a + h * (j + 1) as f64,
                    )
                })
                .sum()
        };
        let res = quadrature::origin_singular(
            |rho: f64| {
                let bl = kernel.coefficients(rho).b_l;
                rho.powf(-delta) / bl * (-(d - 1.0) * inner(rho)).exp()
            },
            r,
            p,
            opts,
        )?;
        Ok(res.value)
    };
    let mut rows = Vec::with_capacity(r_grid.len());
    let mut xi = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    let expo = 1.0 - 2.0 * alpha - delta;
    for &r in r_grid {
        let g = dxi(r)?;
        xi += match prev {
            // ∂_r ξ ~ r^{1-2α-δ} below the first point
            None => g * r / (expo + 1.0),
            // trapezoid in ln r on r ∂_r ξ
            Some((r0, g0)) => 0.5 * (g0 * r0 + g * r) * (r / r0).ln(),
        };
        prev = Some((r, g));
        rows.push(XiRow {
            r,
            xi,
            dxi: g,
            ratio: k.c * g / r.powf(expo),
        });
    }
    Ok(rows)
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Transport => "transport",
            Self::ContinuityDivfree => "continuity_divfree",
        })
    }
}

impl fmt::Display for OuterBc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DirichletZero => "dirichlet_zero",
            Self::HomogeneousNeumann => "homogeneous_neumann",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_size() {
        let g = build_grid(1e-4, 10.0, 1.05).unwrap();
        assert!((240..=280).contains(&g.len()), "{}", g.len());
        assert!(g.last_spacing() <= 0.5);
        assert_eq!(g.nodes[1], 1e-4);
        assert_eq!(*g.nodes.last().unwrap(), 10.0);
        assert!(g.nodes.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_guards() {
        assert!(build_grid(1e-6, 10.0, 1.0 + 1e-9).is_err());
        assert!(build_grid(5.0, 10.0, 1.05).is_err());
        assert!(build_grid(1e-4, 10.0, 1.2).is_err());
        assert!(build_grid(0.0, 10.0, 1.05).is_err());
    }

    #[test]
    fn seminorm_examples() {
        let g = build_grid(1e-3, 4.0, 1.05).unwrap();
        let f = g.sample(|r| r.powf(1.3));
        assert!((increment_seminorm(&g.nodes, &f, 1.3, 1.0) - 1.0).abs() < 1e-12);
        let c = g.sample(|_| 2.5);
        assert_eq!(increment_seminorm(&g.nodes, &c, 1.0, 1.0), 0.0);
        // dense direct maximization of (1 - e^{-r²/4})/r on r < 0.5
        let g = build_grid_with_cap(1e-3, 4.0, 1.05, 1e-3).unwrap();
        let gauss = g.sample(|r| (-r * r / 4.0).exp());
        let on_grid = increment_seminorm(&g.nodes, &gauss, 1.0, 0.5);
        let dense = (1..=100_000)
            .map(|i| 0.5 * i as f64 / 100_000.0)
            .filter(|r| *r < 0.5)
            .map(|r| (1.0 - (-r * r / 4.0).exp()) / r)
            .fold(0.0, f64::max);
        assert!((on_grid - dense).abs() < 5e-3 * dense, "{on_grid} {dense}");
    }

    #[test]
    fn amplitude_of_exact_power_law() {
        let g = build_grid(1e-4, 10.0, 1.05).unwrap();
        let f = g.sample(|r| 1.0 - 0.7 * r);
        let fit = singular_amplitude(&g.nodes, &f, 1.0, (1e-3, 1e-1)).unwrap();
        assert!((fit.amplitude - 0.7).abs() < 1e-12);
        assert!((fit.exponent - 1.0).abs() < 1e-12);
    }

    #[test]
    fn amplitude_rejects_bad_windows() {
        let g = build_grid(1e-4, 10.0, 1.05).unwrap();
        let rising = g.sample(|r| 1.0 + r);
        assert!(matches!(
            singular_amplitude(&g.nodes, &rising, 1.0, (1e-3, 1e-1)),
            Err(Error::Fit(_))
        ));
        let wavy = g.sample(|r| 1.0 - r * (2.0 + (300.0 * r).sin()));
        assert!(singular_amplitude(&g.nodes, &wavy, 1.0, (1e-3, 1e-1)).is_err());
    }

    #[test]
    fn schedule_is_geometric() {
        let s = geometric_schedule(1e-3, 1.0, 10);
        assert_eq!(s.len(), 31);
        assert!((s[0] - 1e-3).abs() < 1e-18 && (s[30] - 1.0).abs() < 1e-14);
        assert!((s[10] - 1e-2).abs() < 1e-14);
    }

    #[test]
    fn mode_and_bc_parse() {
        assert_eq!(
            "continuity_divfree".parse::<Mode>().unwrap(),
            Mode::ContinuityDivfree
        );
        assert_eq!(
            "homogeneous_neumann".parse::<OuterBc>().unwrap(),
            OuterBc::HomogeneousNeumann
        );
        assert!("neumann".parse::<OuterBc>().is_err());
        assert_eq!(Mode::Transport.to_string(), "transport");
    }
}
