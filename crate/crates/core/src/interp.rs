//! Monotone piecewise-cubic Hermite interpolation (Fritsch–Carlson).

use crate::error::{invalid, Result};

/// Shape-preserving cubic interpolant through `(x_i, y_i)`.
///
/// Node slopes come from the local five-point interpolating polynomial and
/// are then limited (Hyman filter) so that the interpolant is monotone on
/// every interval where the data are monotone. Away from extrema the
/// filter is inactive and the interpolant is fourth-order accurate.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(invalid(
                "monotone cubic needs at least two points and matching lengths",
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "interpolation abscissae must be strictly increasing",
            ));
        }
        let delta: Vec<f64> = (0..n - 1)
            .map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i]))
            .collect();
        let mut m: Vec<f64> = (0..n)
            .map(|i| {
                // five consecutive nodes around i, shifted inwards at the ends
                let width = n.min(5);
                let lo = i.saturating_sub(2).min(n - width);
                let hi = lo + width - 1;
                lagrange_slope(&x[lo..=hi], &y[lo..=hi], i - lo)
            })
            .collect();
        // Hyman filter: keep each slope within [0, 3] times the neighbouring secants
        for i in 0..n {
            let left = if i > 0 { Some(delta[i - 1]) } else { None };
            let right = if i + 1 < n { Some(delta[i]) } else { None };
            let (sign, bound) = match (left, right) {
                (Some(l), Some(r)) if l * r > 0.0 => (r.signum(), 3.0 * l.abs().min(r.abs())),
                (Some(_), Some(_)) => (0.0, 0.0),
                (Some(v), None) | (None, Some(v)) => (v.signum(), 3.0 * v.abs()),
                (None, None) => unreachable!(),
            };
            m[i] = sign * (sign * m[i]).clamp(0.0, bound);
        }
        Ok(Self { x, y, m })
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        }
    }

    /// Value and first derivative at `t`; `t` is clamped to the data range.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let t = t.clamp(self.x_min(), self.x_max());
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let v =
            h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1];
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        let dv = d00 * self.y[i] + d10 * self.m[i] + d01 * self.y[i + 1] + d11 * self.m[i + 1];
        (v, dv)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }
}

/// Derivative at `x[k]` of the polynomial interpolating all of `(x, y)`.
fn lagrange_slope(x: &[f64], y: &[f64], k: usize) -> f64 {
    let xk = x[k];
    let mut slope = 0.0;
    for j in 0..x.len() {
        if j == k {
            let s: f64 = (0..x.len())
                .filter(|&i| i != k)
                .map(|i| 1.0 / (xk - x[i]))
                .sum();
            slope += y[k] * s;
        } else {
            let num: f64 = (0..x.len())
                .filter(|&i| i != k && i != j)
                .map(|i| xk - x[i])
                .product();
            let den: f64 = (0..x.len())
                .filter(|&i| i != j)
                .map(|i| x[j] - x[i])
                .product();
            slope += y[j] * num / den;
        }
    }
    slope
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_nodes_and_lines() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let p = MonotoneCubic::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((p.eval(*a) - b).abs() < 1e-14);
        }
        let (v, d) = p.eval_with_derivative(1.23);
        assert!((v - 1.46).abs() < 1e-13);
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fourth_order_on_smooth_data() {
        let err = |n: usize| {
            let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let p = MonotoneCubic::new(x, y).unwrap();
            (0..1000)
                .map(|k| {
                    let t = k as f64 / 999.0;
                    (p.eval(t) - t.exp()).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(41) / err(81);
        assert!(ratio > 12.0, "error ratio {ratio}");
    }

    #[test]
    fn rejects_unsorted() {
        assert!(MonotoneCubic::new(vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in proptest::collection::vec(0.0f64..5.0, 3..20),
            dx in proptest::collection::vec(0.01f64..2.0, 20),
        ) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (i, s) in steps.iter().enumerate() {
                x.push(x[i] + dx[i]);
                y.push(y[i] + s);
            }
            let p = MonotoneCubic::new(x.clone(), y).unwrap();
            let mut prev = f64::NEG_INFINITY;
            let n = 400;
            for k in 0..=n {
                let t = x[x.len() - 1] * k as f64 / n as f64;
                let v = p.eval(t);
                prop_assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
