//! Power-law fits, the Yaglom dissipation balance and early-time blow-up
//! rates, computed from solver and Monte Carlo output.

use crate::error::{invalid, Error, Result};
use crate::kernels::DerivedConstants;
use crate::radial_pde::{increment_seminorm, PdeRun};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Ordinary least-squares line in log-log coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub slope: f64,
    /// Intercept in natural log units (`y ≈ e^intercept · t^slope`).
    pub intercept: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub slope_ci_95: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Abscissa range actually used.
    pub window: (f64, f64),
}

impl PowerFit {
    /// Prefactor `e^intercept`.
    pub fn prefactor(&self) -> f64 {
        self.intercept.exp()
    }
}

/// OLS of `ys` on `xs` (already in log coordinates).
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> Result<PowerFit> {
    let n = xs.len();
    if n < 3 || ys.len() != n {
        return Err(Error::Fit(format!(
            "need at least 3 points for a line, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_ci_95 = if n > 2 {
        let se = (sse / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0)
            .map_err(|e| Error::Fit(e.to_string()))?
            .inverse_cdf(0.975);
        t * se
    } else {
        f64::NAN
    };
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(*x), b.max(*x))
        });
    Ok(PowerFit {
        slope,
        intercept,
        slope_ci_95,
        r_squared,
        n_points: n,
        window: (lo.exp(), hi.exp()),
    })
}

/// Fits `log y = intercept + slope · log t` on the points with `t` inside
/// `window` (inclusive).
pub fn loglog_fit(points: &[(f64, f64)], window: (f64, f64)) -> Result<PowerFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(invalid(format!(
            "fit window must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, y) in points.iter().filter(|(t, _)| *t >= lo && *t <= hi) {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::Fit(format!(
                "non-positive or non-finite value {y:e} at t = {t:e}"
            )));
        }
        xs.push(t.ln());
        ys.push(y.ln());
    }
    if xs.len() < 4 {
        return Err(Error::Fit(format!(
            "only {} points inside the window [{lo:e}, {hi:e}]; at least 4 are needed",
            xs.len()
        )));
    }
    ols(&xs, &ys)
}

/// Derivative of samples `y(t)` by three-point differences on a
/// non-uniform abscissa, one-sided at the ends.
pub fn nonuniform_derivative(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    assert_eq!(n, y.len());
    if n < 2 {
        return vec![0.0; n];
    }
    if n == 2 {
        let s = (y[1] - y[0]) / (t[1] - t[0]);
        return vec![s, s];
    }
    let three = |i0: usize, at: usize| {
        let (x0, x1, x2) = (t[i0], t[i0 + 1], t[i0 + 2]);
        let x = t[at];
        let l0 = (2.0 * x - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * x - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * x - x0 - x1) / ((x2 - x0) * (x2 - x1));
        l0 * y[i0] + l1 * y[i0 + 1] + l2 * y[i0 + 2]
    };
    (0..n)
        .map(|i| match i {
            0 => three(0, 0),
            i if i == n - 1 => three(n - 3, n - 1),
            i => three(i - 1, i),
        })
        .collect()
}

/// Trapezoid rule.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| 0.5 * (tw[1] - tw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Differential and integrated form of the dissipation balance
/// `-d/dt f(t,0) = 2 c̃ A_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YaglomReport {
    pub times: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// `-d/dt f(t, 0)`.
    pub energy_derivative: Vec<f64>,
    /// `|d/dt f(t,0) + 2 c̃ A_t| / |d/dt f(t,0)|`.
    pub residual: Vec<f64>,
    pub c_tilde: f64,
    /// `2 c̃ ∫ A_t dt` over the report times.
    pub integrated_dissipation: f64,
    /// `f(t_first, 0) - f(t_last, 0)`.
    pub energy_drop: f64,
    /// `|integrated_dissipation - energy_drop| / energy_drop`.
    pub integrated_residual: f64,
}

impl YaglomReport {
    /// Largest pointwise residual on samples with `t` in `[lo, hi]`.
    pub fn max_residual(&self, lo: f64, hi: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.residual)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }
}

/// Dissipation balance on all positive sample times of `run`.
pub fn yaglom_balance(run: &PdeRun, constants: &DerivedConstants) -> Result<YaglomReport> {
    yaglom_balance_window(run, constants, (f64::MIN_POSITIVE, f64::INFINITY))
}

/// Dissipation balance restricted to sample times in `window`.
///
/// The energy derivative uses the full sample schedule so the window edges
/// keep centred stencils.
pub fn yaglom_balance_window(
    run: &PdeRun,
    constants: &DerivedConstants,
    window: (f64, f64),
) -> Result<YaglomReport> {
    let n = run.times.len();
    if n == 0 || run.energy.len() != n || run.amplitude.len() != n {
        return Err(invalid("run is missing the energy or amplitude series"));
    }
    let c_tilde = constants.c_tilde;
    if run
        .profiles
        .iter()
        .all(|p| p.values.iter().all(|v| *v == 0.0))
    {
        let times: Vec<f64> = run
            .times
            .iter()
            .copied()
            .filter(|t| *t >= window.0 && *t <= window.1)
            .collect();
        let zeros = vec![0.0; times.len()];
        return Ok(YaglomReport {
            amplitude: zeros.clone(),
            energy_derivative: zeros.clone(),
            residual: zeros,
            times,
            c_tilde,
            integrated_dissipation: 0.0,
            energy_drop: 0.0,
            integrated_residual: 0.0,
        });
    }
    let deriv = nonuniform_derivative(&run.times, &run.energy);
    let mut times = Vec::new();
    let mut amplitude = Vec::new();
    let mut energy_derivative = Vec::new();
    let mut residual = Vec::new();
    let mut energies = Vec::new();
    for (i, (&t, &df)) in run.times.iter().zip(&deriv).enumerate().take(n) {
        let a = run.amplitude[i];
        if t < window.0 || t > window.1 || a.is_nan() {
            continue;
        }
        let r = if df != 0.0 {
            (df + 2.0 * c_tilde * a).abs() / df.abs()
        } else if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        times.push(t);
        amplitude.push(a);
        energy_derivative.push(-df);
        residual.push(r);
        energies.push(run.energy[i]);
    }
    if times.len() < 2 {
        return Err(invalid(
            "fewer than two samples with a defined amplitude inside the window",
        ));
    }
    let integrated_dissipation = 2.0 * c_tilde * trapezoid(&times, &amplitude);
    let energy_drop = energies[0] - energies[energies.len() - 1];
    let integrated_residual = if energy_drop != 0.0 {
        (integrated_dissipation - energy_drop).abs() / energy_drop.abs()
    } else if integrated_dissipation == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(YaglomReport {
        times,
        amplitude,
        energy_derivative,
        residual,
        c_tilde,
        integrated_dissipation,
        energy_drop,
        integrated_residual,
    })
}

/// Early-time growth of the seminorm at exponent `2 - 2α - 2δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    /// `e` in `⟦f_t⟧ ~ t^{-e}`; zero or negative means no blow-up.
    pub exponent: f64,
    pub fit: PowerFit,
}

/// Fits `⟦f_t⟧_{I^{γ-2δ}(l)} ~ t^{-e}` over sample times inside `t_window`.
pub fn blowup_exponent(run: &PdeRun, delta: f64, t_window: (f64, f64)) -> Result<BlowupFit> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let gamma = run.gamma - 2.0 * delta;
    let l = run.config.seminorm_l;
    let points: Vec<(f64, f64)> = run
        .profiles
        .iter()
        .filter(|p| p.t >= t_window.0 && p.t <= t_window.1 && p.t > 0.0)
        .map(|p| {
            (
                p.t,
                increment_seminorm(&run.grid.nodes, &p.values, gamma, l),
            )
        })
        .collect();
    if points.len() < 4 {
        return Err(invalid(format!(
            "only {} early-time samples in [{:e}, {:e}]; at least 4 are needed",
            points.len(),
            t_window.0,
            t_window.1
        )));
    }
    let fit = loglog_fit(&points, t_window)?;
    Ok(BlowupFit {
        exponent: -fit.slope,
        fit,
    })
}
