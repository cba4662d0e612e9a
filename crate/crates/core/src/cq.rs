//! Backward-Euler convolution quadrature on non-uniform meshes.
//!
//! The weights `ω^CQ_{n,j}` multiply the slopes `(U_{j+1} - U_j) / κ_j` exactly as
//! the L1 weights do. Three independent evaluations are provided:
//!
//! * the real-axis integral
//!   `κ_j sin((1-β)π)/π ∫_0^∞ x^{β-1} Π_{k=j}^n (1 + x κ_k)^{-1} dx`,
//!   computed in `s = ln x` with composite Gauss–Legendre panels;
//! * divided differences of the transfer function `K(s) = s^{β-1}` at the
//!   reciprocal steps;
//! * the closed form `κ^{1-β} w_{n-j}` on uniform meshes, where `w_m` are the
//!   Taylor coefficients of `(1 - ζ)^{β-1}`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::l1::L1Context;
use crate::mesh::TimeMesh;
use crate::quadrature::GaussLegendre;
use crate::special::gamma;

/// Largest `n - j` accepted by the divided-difference route.
pub const DIVDIFF_LIMIT: usize = 25;

const MAX_LEVEL: u32 = 4;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

#[derive(Debug, Clone, Copy)]
pub struct CQContext<'a> {
    mesh: &'a TimeMesh,
    beta: f64,
    quad_tol: f64,
}

impl<'a> CQContext<'a> {
    pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

    pub fn new(mesh: &'a TimeMesh, beta: f64) -> Result<Self> {
        Self::with_tol(mesh, beta, Self::DEFAULT_QUAD_TOL)
    }

    pub fn with_tol(mesh: &'a TimeMesh, beta: f64, quad_tol: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("fractional order {beta} not in (0, 1)")));
        }
        if !(quad_tol > 0.0 && quad_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("quadrature tolerance {quad_tol} not in (0, 1)")));
        }
        Ok(Self { mesh, beta, quad_tol })
    }

    pub fn mesh(&self) -> &'a TimeMesh {
        self.mesh
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    fn check_indices(&self, n: usize, j: usize) -> Result<()> {
        let intervals = self.mesh.intervals();
        if n >= intervals {
            return Err(Error::IntervalOutOfRange { index: n, intervals });
        }
        if j > n {
            return Err(Error::IntervalOutOfRange { index: j, intervals: n + 1 });
        }
        Ok(())
    }

    /// `ω^CQ_{n,j}` by the real-axis integral, refined until two panel
    /// densities agree to `quad_tol`.
    pub fn cq_weight(&self, n: usize, j: usize) -> Result<f64> {
        self.check_indices(n, j)?;
        if j == n {
            return Ok(self.mesh.step(n).powf(1.0 - self.beta));
        }
        let mut prev = self.row_quadrature(n, j, 0)[0];
        for level in 1..=MAX_LEVEL {
            let next = self.row_quadrature(n, j, level)[0];
            if (next - prev).abs() <= self.quad_tol * next.abs() {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::QuadratureNonConvergence(format!(
            "weight ({n}, {j}) did not settle to {:e} within {MAX_LEVEL} refinements",
            self.quad_tol
        )))
    }

    /// `[ω^CQ_{n,0}, …, ω^CQ_{n,n}]` at the base panel density.
    pub fn weight_row(&self, n: usize) -> Result<Vec<f64>> {
        self.check_indices(n, 0)?;
        Ok(self.row_at_level(n, 0))
    }

    fn row_at_level(&self, n: usize, level: u32) -> Vec<f64> {
        let mut row = if n == 0 { Vec::with_capacity(1) } else { self.row_quadrature(n, 0, level) };
        row.push(self.mesh.step(n).powf(1.0 - self.beta));
        row
    }

    /// Quadrature values of `ω_{n,j}` for `j = j_lo, …, n-1`.
    fn row_quadrature(&self, n: usize, j_lo: usize, level: u32) -> Vec<f64> {
        let beta = self.beta;
        let steps = &self.mesh.steps()[j_lo..=n];
        let span = self.mesh.node(n + 1) - self.mesh.node(j_lo);
        let k_min = steps.iter().copied().fold(f64::INFINITY, f64::min);
        let kn = steps[steps.len() - 1];
        let kn1 = steps[steps.len() - 2];

        // every weight integral is at least Γ(β) span^{-β}
        let floor = gamma(beta) * span.powf(-beta);
        let tol = 0.1 * self.quad_tol;
        let core_lo = -span.ln() - 3.0;
        let core_hi = -k_min.ln() + 3.0;
        // ∫_{-∞}^{s} e^{βs} ds
        let s_lo = ((tol * beta * floor).ln() / beta).min(core_lo - 1.0);
        // ∫_s^∞ e^{(β-2)s} / (κ_n κ_{n-1}) ds
        let s_hi = ((tol * (2.0 - beta) * kn * kn1 * floor).ln() / (beta - 2.0)).max(core_hi + 1.0);

        let h = 2.0 / f64::from(1u32 << level);
        let points = panel_points(s_lo, core_lo, core_hi, s_hi, h, 8.0 / beta, 4.0);

        let m = steps.len() - 1;
        let mut acc = vec![0.0; m];
        let scale = (beta * PI).sin() / PI;
        for (s, w) in points {
            let x = s.exp();
            let base = w * (beta * s).exp();
            let mut p = 1.0 / (1.0 + x * kn);
            for i in (0..m).rev() {
                p /= 1.0 + x * steps[i];
                if p < 1e-300 {
                    break;
                }
                acc[i] += base * p;
            }
        }
        acc.iter().zip(steps).map(|(a, k)| scale * k * a).collect()
    }

    /// `ω^CQ_{n,j}` from divided differences of `s^{β-1}`.
    pub fn cq_weight_divdiff(&self, n: usize, j: usize) -> Result<f64> {
        self.check_indices(n, j)?;
        divided_difference_weight(&self.mesh.steps()[j..=n], self.beta - 1.0)
    }

    /// Maximum relative defect of the composition identity
    /// `Σ_j ω_{n,j}(s^β)(U_{j+1} - U_0) = Σ_j ω_{n,j}(s^{β-1})(U_{j+1} - U_j)/κ_j`
    /// for rows `0..=n`, with `data = [U_0, …, U_{n+1}]`.
    ///
    /// The left side uses divided-difference weights, the right side quadrature
    /// weights.
    pub fn compose_check(&self, n: usize, data: &[f64]) -> Result<f64> {
        self.check_indices(n, 0)?;
        if data.len() < n + 2 {
            return Err(Error::DimensionMismatch { expected: n + 2, got: data.len() });
        }
        let steps = self.mesh.steps();
        let mut worst = 0.0f64;
        for r in 0..=n {
            let row = self.row_at_level(r, 0);
            let (mut lhs, mut rhs, mut size) = (0.0, 0.0, 0.0f64);
            for j in 0..=r {
                let a = divided_difference_weight(&steps[j..=r], self.beta)? * (data[j + 1] - data[0]);
                let b = row[j] * (data[j + 1] - data[j]) / steps[j];
                lhs += a;
                rhs += b;
                size += a.abs() + b.abs();
            }
            if size > 0.0 {
                worst = worst.max((lhs - rhs).abs() / size);
            }
        }
        Ok(worst)
    }

    /// Every weight of the mesh as CSV `n,j,cq,l1`.
    pub fn weights_csv(&self) -> Result<String> {
        let table = WeightTable::new(*self)?;
        let l1 = L1Context::new(self.mesh, self.beta)?;
        let mut out = String::from("n,j,cq,l1\n");
        for n in 0..self.mesh.intervals() {
            let row = table.row(n)?;
            for (j, w) in row.iter().enumerate() {
                let _ = writeln!(out, "{n},{j},{w},{}", l1.nodal_weight(n, j));
            }
        }
        Ok(out)
    }
}

/// Gauss points over `[s_lo, s_hi]`: panels of width `h` on the core
/// `[core_lo, core_hi]`, geometrically widening outside it up to the caps.
fn panel_points(
    s_lo: f64,
    core_lo: f64,
    core_hi: f64,
    s_hi: f64,
    h: f64,
    cap_left: f64,
    cap_right: f64,
) -> Vec<(f64, f64)> {
    let rule = rule();
    let mut edges = Vec::new();
    let mut w = h;
    let mut x = core_lo;
    while x > s_lo {
        edges.push(x);
        x -= w;
        w = (2.0 * w).min(cap_left);
    }
    edges.push(s_lo);
    edges.reverse();
    let core_panels = (((core_hi - core_lo) / h).ceil() as usize).max(1);
    let ch = (core_hi - core_lo) / core_panels as f64;
    for p in 1..core_panels {
        edges.push(core_lo + p as f64 * ch);
    }
    let (mut x, mut w) = (core_hi, h);
    while x < s_hi {
        edges.push(x);
        x += w;
        w = (2.0 * w).min(cap_right);
    }
    edges.push(s_hi);
    let mut pts = Vec::with_capacity(edges.len() * rule.len());
    for e in edges.windows(2) {
        pts.extend(rule.on(e[0], e[1]));
    }
    pts
}

/// Weight `Π_{k≥1}(-κ_k)^{-1} [κ_0^{-1}, …, κ_m^{-1}] K` for `K(s) = s^p`,
/// with `steps = [κ_0, …, κ_m]`.
pub fn divided_difference_weight(steps: &[f64], p: f64) -> Result<f64> {
    let m = steps.len().checked_sub(1).ok_or_else(|| Error::InvalidParameter("no steps".into()))?;
    if m > DIVDIFF_LIMIT {
        return Err(Error::DividedDifferenceUnstable { points: m, limit: DIVDIFF_LIMIT });
    }
    // homogeneity: with x'_i = κ_m / κ_i the weight is
    // (-1)^m κ_m^{-p} Π_{k≥1} (κ_m / κ_k) [x'_0, …, x'_m] s^p
    let kn = steps[m];
    let mut x: Vec<f64> = steps.iter().map(|k| kn / k).collect();
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let prod: f64 = x[1..].iter().product();
    x.sort_by(f64::total_cmp);
    Ok(sign * kn.powf(-p) * prod * divided_difference(&x, p))
}

/// `[x_0, …, x_m] s^p` for sorted positive nodes.
fn divided_difference(x: &[f64], p: f64) -> f64 {
    let m = x.len();
    let mut memo = vec![f64::NAN; m * m];
    dd_rec(x, p, 0, m - 1, &mut memo)
}

fn dd_rec(x: &[f64], p: f64, lo: usize, hi: usize, memo: &mut [f64]) -> f64 {
    let m = x.len();
    let cached = memo[lo * m + hi];
    if !cached.is_nan() {
        return cached;
    }
    let v = if lo == hi {
        x[lo].powf(p)
    } else if x[hi] - x[lo] <= 0.5 * x[lo] {
        taylor_divided_difference(&x[lo..=hi], p)
    } else {
        (dd_rec(x, p, lo + 1, hi, memo) - dd_rec(x, p, lo, hi - 1, memo)) / (x[hi] - x[lo])
    };
    memo[lo * m + hi] = v;
    v
}

/// Divided difference of `s^p` over clustered nodes from the Taylor series
/// about their mean: `Σ_r a_{m+r} h_r(y)`, with `y_i = x_i - c` and `h_r` the
/// complete homogeneous symmetric polynomials.
fn taylor_divided_difference(x: &[f64], p: f64) -> f64 {
    let m = x.len() - 1;
    let c = x.iter().sum::<f64>() / x.len() as f64;
    let y: Vec<f64> = x.iter().map(|v| v - c).collect();
    // a_k = binom(p, k) c^{p-k}
    let mut a = c.powf(p);
    for k in 0..m {
        a *= (p - k as f64) / ((k + 1) as f64 * c);
    }
    let mut h = vec![1.0; y.len()];
    let mut sum = a;
    let mut quiet = 0;
    for r in 1..5000 {
        let k = m + r - 1;
        a *= (p - k as f64) / ((k + 1) as f64 * c);
        let mut run = 0.0;
        for (hi, yi) in h.iter_mut().zip(&y) {
            run += yi * *hi;
            *hi = run;
        }
        let term = a * h[y.len() - 1];
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    sum
}

/// `κ^{1-β} w_m` with `w_m = w_{m-1} (m - β) / m`, `w_0 = 1`.
pub fn cq_weights_uniform(kappa: f64, m: usize, beta: f64) -> f64 {
    let mut w = 1.0;
    for i in 1..=m {
        w *= (i as f64 - beta) / i as f64;
    }
    kappa.powf(1.0 - beta) * w
}

/// Rows of CQ weights for a whole mesh. On meshes with equal steps the
/// weights depend on `n - j` only and are computed once.
#[derive(Debug, Clone)]
pub struct WeightTable<'a> {
    ctx: CQContext<'a>,
    lags: Option<Vec<f64>>,
}

impl<'a> WeightTable<'a> {
    pub fn new(ctx: CQContext<'a>) -> Result<Self> {
        let mesh = ctx.mesh;
        let uniform = (mesh.max_step() - mesh.min_step()) <= 1e-12 * mesh.max_step();
        let last = mesh.intervals() - 1;
        let lags = if uniform {
            let mut row = ctx.row_at_level(last, 0);
            row.reverse();
            Some(row)
        } else {
            None
        };
        let table = Self { ctx, lags };
        table.verify(last)?;
        Ok(table)
    }

    /// Compares the longest row against a doubled panel density.
    fn verify(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        let coarse = self.row(n)?;
        let fine = self.ctx.row_at_level(n, 1);
        for (j, (a, b)) in coarse.iter().zip(&fine).enumerate() {
            if (a - b).abs() > self.ctx.quad_tol * b.abs() {
                return Err(Error::QuadratureNonConvergence(format!(
                    "weight ({n}, {j}): {a} vs {b} at doubled density"
                )));
            }
        }
        Ok(())
    }

    pub fn is_shift_invariant(&self) -> bool {
        self.lags.is_some()
    }

    /// `[ω_{n,0}, …, ω_{n,n}]`.
    pub fn row(&self, n: usize) -> Result<Vec<f64>> {
        self.ctx.check_indices(n, 0)?;
        Ok(match &self.lags {
            Some(l) => l[..=n].iter().rev().copied().collect(),
            None => self.ctx.row_at_level(n, 0),
        })
    }
}
