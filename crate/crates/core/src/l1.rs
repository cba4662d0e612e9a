//! The L1 discretization of the Caputo derivative.
//!
//! For nodal data `U_0, …, U_N` with piecewise linear interpolant `Û`, the
//! discrete derivative is the exact Caputo derivative of `Û`:
//!
//! ```text
//! D_t^β Û(t) = Σ_j ω_j(t) (U_{j+1} - U_j) / κ_j,
//! ω_j(t)     = ((t - t_j)^{1-β} - (t - min(t, t_{j+1}))^{1-β}) / Γ(2-β),   t ≥ t_j,
//! ```
//!
//! and `ω_j(t) = 0` for `t ≤ t_j`. The nodal weights are `ω_{n,j} = ω_j(t_{n+1})`.

use crate::error::{Error, Result};
use crate::mesh::TimeMesh;
use crate::space::HElem;
use crate::special::gamma;

/// `x^a - (x - h)_+^a` for `x > 0`, `h > 0`, accurate also when `h ≪ x`.
pub(crate) fn power_difference(x: f64, h: f64, a: f64) -> f64 {
    if h >= x {
        return x.powf(a);
    }
    -x.powf(a) * (a * (-h / x).ln_1p()).exp_m1()
}

/// A time mesh together with the fractional order.
#[derive(Debug, Clone, Copy)]
pub struct L1Context<'a> {
    mesh: &'a TimeMesh,
    beta: f64,
    inv_gamma_2mb: f64,
}

impl<'a> L1Context<'a> {
    pub fn new(mesh: &'a TimeMesh, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("fractional order {beta} not in (0, 1)")));
        }
        Ok(Self { mesh, beta, inv_gamma_2mb: 1.0 / gamma(2.0 - beta) })
    }

    pub fn mesh(&self) -> &'a TimeMesh {
        self.mesh
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `ω_j(t)`.
    pub fn omega(&self, j: usize, t: f64) -> f64 {
        let tj = self.mesh.node(j);
        if t <= tj {
            return 0.0;
        }
        let next = self.mesh.node(j + 1);
        let h = if t <= next { t - tj } else { next - tj };
        self.inv_gamma_2mb * power_difference(t - tj, h, 1.0 - self.beta)
    }

    /// `a_j(t) = (t - t_j)_+^{1-β} / Γ(2-β)`, so that `ω_j = a_j - a_{j+1}`.
    #[cfg(test)]
    pub(crate) fn a(&self, j: usize, t: f64) -> f64 {
        let tj = self.mesh.node(j);
        if t <= tj {
            0.0
        } else {
            self.inv_gamma_2mb * (t - tj).powf(1.0 - self.beta)
        }
    }

    /// `ω_{n,j}`.
    pub fn nodal_weight(&self, n: usize, j: usize) -> f64 {
        if j > n {
            return 0.0;
        }
        let t = self.mesh.node(n + 1);
        self.inv_gamma_2mb
            * power_difference(t - self.mesh.node(j), self.mesh.step(j), 1.0 - self.beta)
    }

    /// `[ω_{n,0}, …, ω_{n,n}]`.
    pub fn nodal_weights(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|j| self.nodal_weight(n, j)).collect()
    }

    /// `D_t^β Û(t)` from nodal values.
    pub fn frac_derivative_at(&self, values: &[HElem], t: f64) -> Result<HElem> {
        let slopes = slopes(self.mesh, values)?;
        self.frac_derivative_from_slopes(&slopes, t)
    }

    /// `D_t^β Û(t)` from the slopes `(U_{j+1} - U_j) / κ_j` of the interpolant.
    pub fn frac_derivative_from_slopes(&self, slopes: &[HElem], t: f64) -> Result<HElem> {
        let last = self.mesh.node(slopes.len().min(self.mesh.intervals()));
        if slopes.is_empty() || !(t >= 0.0) || t > last {
            return Err(Error::InsufficientHistory { t, last });
        }
        let mut out = HElem::zeros(slopes[0].dim());
        for (j, d) in slopes.iter().enumerate() {
            if self.mesh.node(j) >= t {
                break;
            }
            out.axpy(self.omega(j, t), d);
        }
        Ok(out)
    }

    /// The same derivative through the telescoped form
    /// `a_0(t) D_0 + Σ_{j≥1} a_j(t) (D_j - D_{j-1})`.
    #[cfg(test)]
    pub(crate) fn frac_derivative_telescoped(&self, slopes: &[HElem], t: f64) -> HElem {
        let mut out = HElem::zeros(slopes[0].dim());
        out.axpy(self.a(0, t), &slopes[0]);
        for j in 1..slopes.len() {
            if self.mesh.node(j) >= t {
                break;
            }
            out.axpy(self.a(j, t), &(&slopes[j] - &slopes[j - 1]));
        }
        out
    }
}

/// Slopes `(U_{j+1} - U_j) / κ_j` of the interpolant of `values` on `mesh`.
pub fn slopes(mesh: &TimeMesh, values: &[HElem]) -> Result<Vec<HElem>> {
    if values.len() > mesh.nodes().len() {
        return Err(Error::InvalidParameter(format!(
            "{} values for a mesh with {} nodes",
            values.len(),
            mesh.nodes().len()
        )));
    }
    Ok(values
        .windows(2)
        .enumerate()
        .map(|(j, w)| {
            let mut d = &w[1] - &w[0];
            d.scale(1.0 / mesh.step(j));
            d
        })
        .collect())
}
