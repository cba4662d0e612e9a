//! The Hilbert space `H` and the operator `A`.
//!
//! Two realizations are provided: the scalar case `H = ℝ`, `A = λ`, and the
//! Galerkin discretization of the Dirichlet Laplacian on `(0, π)` with
//! continuous piecewise quadratic elements on a uniform grid. In the finite
//! element case `H = V_h` carries the `L²` inner product `uᵀ M v` and
//! `A_h = M⁻¹ S`, so that `⟨A_h u, v⟩ = uᵀ S v`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// An element of `H`: a single value or a vector of finite-element coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct HElem(Vec<f64>);

impl HElem {
    pub fn scalar(v: f64) -> Self {
        Self(vec![v])
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// The value of a one-dimensional element.
    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// `self += a · x`
    pub fn axpy(&mut self, a: f64, x: &HElem) {
        debug_assert_eq!(self.dim(), x.dim());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for s in &mut self.0 {
            *s *= a;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for &HElem {
    type Output = HElem;
    fn add(self, rhs: &HElem) -> HElem {
        HElem(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &HElem {
    type Output = HElem;
    fn sub(self, rhs: &HElem) -> HElem {
        HElem(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<&HElem> for f64 {
    type Output = HElem;
    fn mul(self, rhs: &HElem) -> HElem {
        HElem(rhs.0.iter().map(|v| self * v).collect())
    }
}

/// Symmetric matrix with half-bandwidth 2, stored by diagonals:
/// `bands[d][i] = A[i][i + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    bands: [Vec<f64>; 3],
}

impl SymBand {
    fn zeros(n: usize) -> Self {
        Self { bands: [vec![0.0; n], vec![0.0; n.saturating_sub(1)], vec![0.0; n.saturating_sub(2)]] }
    }

    pub fn dim(&self) -> usize {
        self.bands[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match j - i {
            d @ 0..=2 => self.bands[d][i],
            _ => 0.0,
        }
    }

    fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.bands[j - i][i] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut acc = self.bands[0][i] * x[i];
            for d in 1..=2 {
                if i + d < n {
                    acc += self.bands[d][i] * x[i + d];
                }
                if i >= d {
                    acc += self.bands[d][i - d] * x[i - d];
                }
            }
            y[i] = acc;
        }
        y
    }

    /// `a · self + b · other`
    fn combine(&self, a: f64, other: &SymBand, b: f64) -> SymBand {
        let mut out = self.clone();
        for d in 0..3 {
            for (o, v) in out.bands[d].iter_mut().zip(&other.bands[d]) {
                *o = a * *o + b * v;
            }
        }
        out
    }

    /// `uᵀ A v`, written so that swapping `u` and `v` gives bit-identical results.
    fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            acc += self.bands[0][i] * (u[i] * v[i]);
            for d in 1..=2 {
                if i + d < self.dim() {
                    acc += self.bands[d][i] * (u[i] * v[i + d] + u[i + d] * v[i]);
                }
            }
        }
        acc
    }
}

/// Banded Cholesky factor `L` of a [`SymBand`]; `l[d][i] = L[i][i - d]`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: [Vec<f64>; 3],
}

impl BandCholesky {
    pub fn factor(a: &SymBand) -> Result<Self> {
        let n = a.dim();
        let mut l = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        let get_l = |l: &[Vec<f64>; 3], i: usize, j: usize| -> f64 {
            if j > i || i - j > 2 {
                0.0
            } else {
                l[i - j][i]
            }
        };
        for i in 0..n {
            for j in i.saturating_sub(2)..i {
                let mut s = a.get(i, j);
                for k in i.saturating_sub(2)..j {
                    s -= get_l(&l, i, k) * get_l(&l, j, k);
                }
                l[i - j][i] = s / l[0][j];
            }
            let mut s = a.get(i, i);
            for k in i.saturating_sub(2)..i {
                let v = get_l(&l, i, k);
                s -= v * v;
            }
            if !(s > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "matrix not positive definite at row {i}"
                )));
            }
            l[0][i] = s.sqrt();
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for d in 1..=2 {
                if i >= d {
                    s -= self.l[d][i] * y[i - d];
                }
            }
            y[i] = s / self.l[0][i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for d in 1..=2 {
                if i + d < n {
                    s -= self.l[d][i + d] * y[i + d];
                }
            }
            y[i] = s / self.l[0][i];
        }
        y
    }
}

const SHIFT_CACHE_LIMIT: usize = 4096;

/// Quadratic Lagrange finite elements for `-d²/dx²` on `(0, π)` with
/// homogeneous Dirichlet conditions.
#[derive(Debug)]
pub struct FemOperator {
    elements: usize,
    h: f64,
    mass: SymBand,
    stiffness: SymBand,
    mass_factor: BandCholesky,
    // factorizations of αM + S keyed by the bits of α
    shifted: Mutex<HashMap<u64, Arc<BandCholesky>>>,
}

impl Clone for FemOperator {
    fn clone(&self) -> Self {
        Self {
            elements: self.elements,
            h: self.h,
            mass: self.mass.clone(),
            stiffness: self.stiffness.clone(),
            mass_factor: self.mass_factor.clone(),
            shifted: Mutex::new(HashMap::new()),
        }
    }
}

impl FemOperator {
    pub const ELEMENT_STIFFNESS: [[f64; 3]; 3] =
        [[7.0, -8.0, 1.0], [-8.0, 16.0, -8.0], [1.0, -8.0, 7.0]];
    pub const ELEMENT_MASS: [[f64; 3]; 3] = [[4.0, 2.0, -1.0], [2.0, 16.0, 2.0], [-1.0, 2.0, 4.0]];

    pub fn assemble(elements: usize) -> Result<Self> {
        if elements < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 elements, got {elements}")));
        }
        let h = PI / elements as f64;
        let dim = 2 * elements - 1;
        let mut mass = SymBand::zeros(dim);
        let mut stiffness = SymBand::zeros(dim);
        for e in 0..elements {
            // global nodes 2e, 2e+1, 2e+2; interior dof = global - 1
            let dofs: [Option<usize>; 3] =
                [0, 1, 2].map(|a| (2 * e + a).checked_sub(1).filter(|&d| d < dim));
            for a in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dofs[a], dofs[b]) {
                        if i <= j {
                            mass.add_to(i, j, h / 30.0 * Self::ELEMENT_MASS[a][b]);
                            stiffness.add_to(i, j, Self::ELEMENT_STIFFNESS[a][b] / (3.0 * h));
                        }
                    }
                }
            }
        }
        let mass_factor = BandCholesky::factor(&mass)?;
        Ok(Self { elements, h, mass, stiffness, mass_factor, shifted: Mutex::new(HashMap::new()) })
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn dim(&self) -> usize {
        2 * self.elements - 1
    }

    pub fn mesh_width(&self) -> f64 {
        self.h
    }

    pub fn mass(&self) -> &SymBand {
        &self.mass
    }

    pub fn stiffness(&self) -> &SymBand {
        &self.stiffness
    }

    /// Coordinates of the interior degrees of freedom.
    pub fn dof_coordinates(&self) -> Vec<f64> {
        (1..2 * self.elements).map(|g| g as f64 * 0.5 * self.h).collect()
    }

    fn shifted_factor(&self, alpha: f64) -> Result<Arc<BandCholesky>> {
        let mut cache = self.shifted.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(f) = cache.get(&alpha.to_bits()) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(BandCholesky::factor(&self.mass.combine(alpha, &self.stiffness, 1.0))?);
        if cache.len() >= SHIFT_CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(alpha.to_bits(), Arc::clone(&f));
        Ok(f)
    }

    /// Load vector `b_i = ∫ f φ_i` by 3-point Gauss per element.
    fn load_vector(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let dim = self.dim();
        let mut b = vec![0.0; dim];
        let rule = GaussLegendre::new(3);
        for e in 0..self.elements {
            let x0 = e as f64 * self.h;
            for (xi, w) in rule.on(0.0, 1.0) {
                let fx = f(x0 + xi * self.h) * w * self.h;
                let shape = [(1.0 - xi) * (1.0 - 2.0 * xi), 4.0 * xi * (1.0 - xi), xi * (2.0 * xi - 1.0)];
                for (a, phi) in shape.iter().enumerate() {
                    if let Some(i) = (2 * e + a).checked_sub(1).filter(|&d| d < dim) {
                        b[i] += fx * phi;
                    }
                }
            }
        }
        b
    }

    /// Smallest eigenvalue of `S x = λ M x` by inverse iteration.
    pub fn smallest_eigenvalue(&self) -> Result<f64> {
        let s_factor = BandCholesky::factor(&self.stiffness)?;
        let mut x: Vec<f64> = self.dof_coordinates().iter().map(|x| 1.0 + x * (PI - x)).collect();
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y = s_factor.solve(&self.mass.matvec(&x));
            let norm = self.mass.quadratic_form(&y, &y).sqrt();
            x = y.into_iter().map(|v| v / norm).collect();
            let next = self.stiffness.quadratic_form(&x, &x) / self.mass.quadratic_form(&x, &x);
            if (next - lambda).abs() <= 1e-15 * next {
                return Ok(next);
            }
            lambda = next;
        }
        Ok(lambda)
    }
}

/// The positive definite self-adjoint operator `A` together with its space.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum SpaceOperator {
    /// `H = ℝ`, `A u = λ u`.
    Scalar { lambda: f64 },
    Fem(FemOperator),
}

impl SpaceOperator {
    pub fn scalar(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        Ok(Self::Scalar { lambda })
    }

    pub fn fem(elements: usize) -> Result<Self> {
        Ok(Self::Fem(FemOperator::assemble(elements)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Scalar { .. } => 1,
            Self::Fem(op) => op.dim(),
        }
    }

    pub fn zero(&self) -> HElem {
        HElem::zeros(self.dim())
    }

    fn check(&self, u: &HElem) -> Result<()> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.dim() });
        }
        Ok(())
    }

    /// `A u`
    pub fn apply(&self, u: &HElem) -> Result<HElem> {
        self.check(u)?;
        Ok(match self {
            Self::Scalar { lambda } => *lambda * u,
            Self::Fem(op) => HElem(op.mass_factor.solve(&op.stiffness.matvec(u.as_slice()))),
        })
    }

    /// Solves `α U + A U = rhs` for `α > 0`.
    pub fn shifted_solve(&self, alpha: f64, rhs: &HElem) -> Result<HElem> {
        self.check(rhs)?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("shift {alpha} must be positive")));
        }
        Ok(match self {
            Self::Scalar { lambda } => HElem::scalar(rhs.value() / (alpha + lambda)),
            Self::Fem(op) => {
                let factor = op.shifted_factor(alpha)?;
                HElem(factor.solve(&op.mass.matvec(rhs.as_slice())))
            }
        })
    }

    pub fn inner(&self, u: &HElem, v: &HElem) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(match self {
            Self::Scalar { .. } => u.value() * v.value(),
            Self::Fem(op) => op.mass.quadratic_form(u.as_slice(), v.as_slice()),
        })
    }

    pub fn norm(&self, u: &HElem) -> Result<f64> {
        Ok(self.inner(u, u)?.max(0.0).sqrt())
    }

    /// `|u|₁ = ⟨A u, u⟩^{1/2}`
    pub fn energy_seminorm(&self, u: &HElem) -> Result<f64> {
        self.check(u)?;
        Ok(match self {
            Self::Scalar { lambda } => lambda.sqrt() * u.value().abs(),
            Self::Fem(op) => op.stiffness.quadratic_form(u.as_slice(), u.as_slice()).max(0.0).sqrt(),
        })
    }

    /// `L²` projection `P_h f` onto the finite-element space.
    pub fn l2_project(&self, f: impl Fn(f64) -> f64) -> Result<HElem> {
        match self {
            Self::Scalar { .. } => Err(Error::NotFiniteElement),
            Self::Fem(op) => Ok(HElem(op.mass_factor.solve(&op.load_vector(f)))),
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(f64) -> f64) -> Result<HElem> {
        match self {
            Self::Scalar { .. } => Err(Error::NotFiniteElement),
            Self::Fem(op) => Ok(HElem(op.dof_coordinates().into_iter().map(f).collect())),
        }
    }
}
