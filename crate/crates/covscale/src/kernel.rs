//! Parametric band-pass kernel g(·) evaluated at scaled eigenvalues.
//!
//! The kernel rises as a monomial `(x/x1)^alpha` below the lower knot,
//! follows a cubic spline between the knots, and decays as a power law
//! `(x2/x)^beta` above the upper knot. The spline coefficients are chosen so
//! g is C¹ across both knots, which makes the scale gradients exact
//! everywhere the training loop evaluates them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evaluation interface for band-pass filters.
///
/// The production filter is [`KernelSpec`]; tests inject trivial filters
/// (e.g. a constant one) to isolate the transform from the kernel shape.
pub trait BandPassFilter {
    fn eval(&self, x: f64) -> f64;
    fn deriv(&self, x: f64) -> f64;
}

/// A concrete monomial–cubic–power-law kernel.
///
/// Defaults reproduce the published spectral-wavelet construction:
/// `alpha = beta = 2`, knots at 1 and 2, cubic `-5 + 11x - 6x^2 + x^3`,
/// so `g(x) = x^2` below 1 and `g(x) = 4/x^2` above 2, with `g = 1` at both
/// knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub alpha: f64,
    pub beta: f64,
    pub x1: f64,
    pub x2: f64,
    pub spline_coeffs: [f64; 4],
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            alpha: 2.0,
            beta: 2.0,
            x1: 1.0,
            x2: 2.0,
            spline_coeffs: [-5.0, 11.0, -6.0, 1.0],
        }
    }
}

impl KernelSpec {
    /// Builds a kernel for the given exponents and knots, solving the four
    /// C¹ matching conditions for the cubic coefficients.
    pub fn new(alpha: f64, beta: f64, x1: f64, x2: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && x1 > 0.0 && x2 > x1) {
            return Err(Error::InvalidConfig(format!(
                "kernel requires alpha > 0, beta > 0, 0 < x1 < x2 (got alpha={alpha}, beta={beta}, x1={x1}, x2={x2})"
            )));
        }
        // g(x1)=1, g(x2)=1, g'(x1)=alpha/x1, g'(x2)=-beta/x2
        let a = [
            [1.0, x1, x1 * x1, x1 * x1 * x1],
            [1.0, x2, x2 * x2, x2 * x2 * x2],
            [0.0, 1.0, 2.0 * x1, 3.0 * x1 * x1],
            [0.0, 1.0, 2.0 * x2, 3.0 * x2 * x2],
        ];
        let b = [1.0, 1.0, alpha / x1, -beta / x2];
        let spline_coeffs = solve4(a, b).ok_or_else(|| {
            Error::InvalidConfig("singular spline system for kernel knots".into())
        })?;
        let spec = KernelSpec {
            alpha,
            beta,
            x1,
            x2,
            spline_coeffs,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks value and derivative continuity at both knots (within 1e-12,
    /// relative to the knot values).
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.x1 > 0.0 && self.x2 > self.x1) {
            return Err(Error::InvalidConfig("kernel parameters out of range".into()));
        }
        let tol = 1e-12;
        let checks = [
            (monomial(self, self.x1), cubic(self, self.x1)),
            (powerlaw(self, self.x2), cubic(self, self.x2)),
            (monomial_deriv(self, self.x1), cubic_deriv(self, self.x1)),
            (powerlaw_deriv(self, self.x2), cubic_deriv(self, self.x2)),
        ];
        for (lhs, rhs) in checks {
            if (lhs - rhs).abs() > tol * lhs.abs().max(rhs.abs()).max(1.0) {
                return Err(Error::InvalidConfig(format!(
                    "kernel is not C1 at its knots: {lhs} vs {rhs}"
                )));
            }
        }
        Ok(())
    }
}

impl BandPassFilter for KernelSpec {
    fn eval(&self, x: f64) -> f64 {
        assert!(x >= 0.0, "kernel argument must be nonnegative, got {x}");
        if x < self.x1 {
            monomial(self, x)
        } else if x <= self.x2 {
            cubic(self, x)
        } else {
            powerlaw(self, x)
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        assert!(x >= 0.0, "kernel argument must be nonnegative, got {x}");
        if x < self.x1 {
            monomial_deriv(self, x)
        } else if x <= self.x2 {
            cubic_deriv(self, x)
        } else {
            powerlaw_deriv(self, x)
        }
    }
}

fn monomial(k: &KernelSpec, x: f64) -> f64 {
    (x / k.x1).powf(k.alpha)
}

fn monomial_deriv(k: &KernelSpec, x: f64) -> f64 {
    k.alpha / k.x1 * (x / k.x1).powf(k.alpha - 1.0)
}

fn cubic(k: &KernelSpec, x: f64) -> f64 {
    let [c0, c1, c2, c3] = k.spline_coeffs;
    c0 + x * (c1 + x * (c2 + x * c3))
}

fn cubic_deriv(k: &KernelSpec, x: f64) -> f64 {
    let [_, c1, c2, c3] = k.spline_coeffs;
    c1 + x * (2.0 * c2 + x * 3.0 * c3)
}

fn powerlaw(k: &KernelSpec, x: f64) -> f64 {
    (k.x2 / x).powf(k.beta)
}

fn powerlaw_deriv(k: &KernelSpec, x: f64) -> f64 {
    -k.beta / x * (k.x2 / x).powf(k.beta)
}

/// Gaussian elimination with partial pivoting for the 4x4 spline system.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col];
        for row in col + 1..4 {
            let f = a[row][col] / pivot_row[col];
            for (k, entry) in a[row].iter_mut().enumerate().skip(col) {
                *entry -= f * pivot_row[k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
