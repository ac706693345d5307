//! Gamma-function helpers on top of `statrs`.

use std::f64::consts::PI;

/// Γ(x) for real `x`. Poles return `f64::NAN`.
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return f64::NAN;
    }
    statrs::function::gamma::gamma(x)
}

/// ln |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x);
    }
    statrs::function::gamma::ln_gamma(x)
}

/// cos(απ) Γ(1 - 2α), continued through the removable singularity at α = 1/2.
///
/// Uses Γ(1-2α)Γ(2α) = π / sin(2πα), so the product equals
/// π / (2 sin(πα) Γ(2α)), which is finite for every α ∈ (0, 1).
pub fn cos_gamma_reflected(alpha: f64) -> f64 {
    PI / (2.0 * (PI * alpha).sin() * gamma(2.0 * alpha))
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}
