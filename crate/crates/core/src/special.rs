//! Scalar special functions: Γ and the one-parameter Mittag-Leffler function.

use std::f64::consts::PI;

use statrs::function::gamma as sg;

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Γ(x) for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma argument {x} must be positive")));
    }
    Ok(sg::gamma(x))
}

/// Γ for arguments already known to be positive.
pub(crate) fn gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    sg::gamma(x)
}

pub(crate) fn ln_gamma(x: f64) -> f64 {
    sg::ln_gamma(x)
}

/// Controls the truncated power series of `E_β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLParams {
    pub beta: f64,
    pub tol: f64,
}

impl MLParams {
    pub const DEFAULT_TOL: f64 = 1e-13;
    const TERM_BUDGET: usize = 10_000;

    pub fn new(beta: f64) -> Result<Self> {
        Self::with_tol(beta, Self::DEFAULT_TOL)
    }

    pub fn with_tol(beta: f64, tol: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("Mittag-Leffler order {beta} not in (0, 1]")));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
        }
        Ok(Self { beta, tol })
    }

    /// `E_β(z)` for real `z`.
    ///
    /// Sums the power series `Σ_m z^m / Γ(βm + 1)` with compensation. On the
    /// negative axis, once cancellation between terms would eat the requested
    /// tolerance, the value is taken from the Laplace-type integral
    /// representation instead. Positive arguments have no such fallback.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::InvalidParameter(format!("argument {z} not finite")));
        }
        if self.beta == 1.0 {
            return Ok(z.exp());
        }
        if z == 0.0 {
            return Ok(1.0);
        }
        match self.series(z) {
            Err(Error::SeriesNonConvergence(_)) if z < 0.0 => Ok(self.negative_axis_integral(-z)),
            other => other,
        }
    }

    fn series(&self, z: f64) -> Result<f64> {
        let ln_abs = z.abs().ln();
        let negative = z < 0.0;
        let (mut sum, mut comp) = (1.0f64, 0.0f64);
        let mut largest = 1.0f64;
        // past this index the terms decrease monotonically
        let peak = z.abs().powf(1.0 / self.beta) + 2.0;
        for m in 1..Self::TERM_BUDGET {
            let mag = (m as f64 * ln_abs - ln_gamma(self.beta * m as f64 + 1.0)).exp();
            let term = if negative && m % 2 == 1 { -mag } else { mag };
            largest = largest.max(mag);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            if !sum.is_finite() {
                return Err(Error::SeriesNonConvergence(format!("E_{}({z}) overflows", self.beta)));
            }
            if self.beta * m as f64 + 1.0 > peak && mag <= self.tol * sum.abs() {
                if largest * f64::EPSILON * 4.0 > self.tol * sum.abs() {
                    return Err(Error::SeriesNonConvergence(format!(
                        "cancellation in E_{}({z}): largest term {largest:e} vs result {sum:e}",
                        self.beta
                    )));
                }
                return Ok(sum);
            }
        }
        Err(Error::SeriesNonConvergence(format!(
            "E_{}({z}) not converged within {} terms",
            self.beta,
            Self::TERM_BUDGET
        )))
    }

    /// `E_β(-x) = ∫_0^∞ e^{-r x^{1/β}} K_β(r) dr` with the spectral density
    /// `K_β(r) = sin(βπ) r^{β-1} / (π (r^{2β} + 2 r^β cos βπ + 1))`, valid for
    /// `0 < β < 1`, `x > 0`. Integrated in `s = ln r` by composite Gauss panels.
    fn negative_axis_integral(&self, x: f64) -> f64 {
        let b = self.beta;
        let t = x.powf(1.0 / b);
        let (sin_b, cos_b) = (b * PI).sin_cos();
        // integrand in s behaves like e^{βs} on the left and is cut off by
        // e^{-t e^s} on the right
        let s_lo = (1e-18 * b).ln() / b;
        let s_hi = (45.0 / t).ln().max(s_lo + 1.0);
        // poles of K_β sit at distance (1-β)π/β from the real s axis
        let width = (0.5f64).min((1.0 - b) * PI / b);
        let rule = GaussLegendre::new(16);
        let sum = rule.composite(s_lo, s_hi, width, |s| {
            let r = s.exp();
            let rb = (b * s).exp();
            (-r * t).exp() * rb / (rb * rb + 2.0 * rb * cos_b + 1.0)
        });
        sin_b / PI * sum
    }
}

/// `E_β(z)` at the default tolerance.
pub fn mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    MLParams::new(beta)?.eval(z)
}
