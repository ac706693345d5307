//! Numerical laboratory for the Kraichnan passive-scalar model.
//!
//! The crate is organised around four subsystems:
//!
//! * [`kernels`]: the isotropic Kraichnan covariance, its small-scale
//!   constants and the compressibility regimes;
//! * [`radial_pde`]: the radial two-point correlation equation on a graded
//!   grid, with the observables that expose anomalous dissipation and the
//!   `2 - 2α` regularity threshold;
//! * [`dispersion`]: Monte Carlo for the pair-separation diffusion
//!   (Richardson dispersion);
//! * [`scaling`]: log-log fits, the Yaglom dissipation balance and
//!   early-time blow-up rates.
//!
//! Numerical building blocks (quadrature, the Gamma function, interpolation,
//! tridiagonal solves) live in their own modules and are public so that
//! callers can reuse them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dispersion;
pub mod error;
pub mod interp;
pub mod io;
pub mod kernels;
pub mod quadrature;
pub mod radial_pde;
pub mod scaling;
pub mod special;
pub mod tridiag;

pub use dispersion::{
    gaussian_variance_identity, moment_curve, richardson_report, simulate_separation, McConfig,
    MomentPoint, RichardsonReport, SeparationEnsemble,
};
pub use error::{Error, Result};
pub use kernels::{
    classify_regime, derived_constants, dissipation_constant_closed_form, ConstantsReport,
    DerivedConstants, IsotropicKernel, KernelMode, ModelParams, RadialCoefficients, Regime,
};
pub use radial_pde::{
    build_grid, evolve, xi_diagnostic, Mode, OuterBc, PdeConfig, PdeRun, RadialGrid, RadialProfile,
};
pub use scaling::{blowup_exponent, loglog_fit, yaglom_balance, PowerFit, YaglomReport};
