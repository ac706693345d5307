//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Tridiagonal system `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
///
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, Default)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// True if every row is weakly diagonally dominant, allowing a relative
    /// slack of `tol`.
    pub fn is_diagonally_dominant(&self, tol: f64) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            let off = if i > 0 { self.lower[i].abs() } else { 0.0 }
                + if i + 1 < n { self.upper[i].abs() } else { 0.0 };
            self.diag[i].abs() >= off * (1.0 - tol)
        })
    }

    /// Solves in place using `scratch` for the modified upper diagonal.
    pub fn solve_into(&self, rhs: &[f64], x: &mut [f64], scratch: &mut Vec<f64>) -> Result<()> {
        let n = self.len();
        if rhs.len() != n || x.len() != n {
            return Err(Error::Numerical("tridiagonal dimension mismatch".into()));
        }
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut denom = self.diag[0];
        if denom == 0.0 {
            return Err(Error::Numerical(
                "zero pivot in tridiagonal solve at row 0".into(),
            ));
        }
        scratch[0] = if n > 1 { self.upper[0] / denom } else { 0.0 };
        x[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * scratch[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Numerical(format!(
                    "zero pivot in tridiagonal solve at row {i}"
                )));
            }
            if i + 1 < n {
                scratch[i] = self.upper[i] / denom;
            }
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= scratch[i] * x[i + 1];
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; rhs.len()];
        let mut scratch = Vec::new();
        self.solve_into(rhs, &mut x, &mut scratch)?;
        Ok(x)
    }

    /// Computes `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }
}
