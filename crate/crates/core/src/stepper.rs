//! Time marching for the L1, corrected L1 and convolution quadrature schemes.
//!
//! All three solve, at every step,
//!
//! ```text
//! (ω_{n,n}/κ_n) U_{n+1} + A U_{n+1} = f(t_{n+1}) + (ω_{n,n}/κ_n) U_n - Σ_{j<n} ω_{n,j} (U_{j+1} - U_j)/κ_j
//! ```
//!
//! and differ only in the weights (and, for the corrected scheme, the first
//! right-hand side).

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use crate::cq::{CQContext, WeightTable};
use crate::error::{Error, Result};
use crate::l1::L1Context;
use crate::mesh::TimeMesh;
use crate::space::{HElem, SpaceOperator};

/// A time-dependent element of `H`.
pub type TimeFn = Arc<dyn Fn(f64) -> HElem + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    L1,
    L1Corrected,
    Cq,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::L1 => "l1",
            Scheme::L1Corrected => "l1corr",
            Scheme::Cq => "cq",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(Scheme::L1),
            "l1corr" | "l1-corrected" | "l1_corrected" => Ok(Scheme::L1Corrected),
            "cq" => Ok(Scheme::Cq),
            other => Err(Error::Parse(format!("unknown scheme {other:?} (expected l1, l1corr or cq)"))),
        }
    }
}

/// `D_t^β u + A u = f`, `u(0) = u⁰`, optionally with a reference solution.
#[derive(Clone)]
pub struct Problem {
    operator: SpaceOperator,
    beta: f64,
    source: TimeFn,
    u0: HElem,
    exact: Option<TimeFn>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("operator", &self.operator)
            .field("beta", &self.beta)
            .field("u0", &self.u0)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl Problem {
    pub fn new(operator: SpaceOperator, beta: f64, source: TimeFn, u0: HElem) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!("fractional order {beta} not in (0, 1)")));
        }
        if u0.dim() != operator.dim() {
            return Err(Error::DimensionMismatch { expected: operator.dim(), got: u0.dim() });
        }
        Ok(Self { operator, beta, source, u0, exact: None })
    }

    pub fn with_exact(mut self, exact: TimeFn) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn operator(&self) -> &SpaceOperator {
        &self.operator
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn u0(&self) -> &HElem {
        &self.u0
    }

    pub fn source_at(&self, t: f64) -> HElem {
        (self.source)(t)
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn exact_at(&self, t: f64) -> Result<HElem> {
        self.exact.as_ref().map(|u| u(t)).ok_or(Error::MissingReference)
    }
}

/// Nodal values `U_0, …, U_N` on a mesh, tagged with the producing scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    mesh: TimeMesh,
    values: Vec<HElem>,
    scheme: Scheme,
}

impl Trajectory {
    pub fn new(mesh: TimeMesh, values: Vec<HElem>, scheme: Scheme) -> Result<Self> {
        if values.len() != mesh.nodes().len() {
            return Err(Error::DimensionMismatch { expected: mesh.nodes().len(), got: values.len() });
        }
        let dim = values[0].dim();
        if let Some(bad) = values.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.dim() });
        }
        Ok(Self { mesh, values, scheme })
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[HElem] {
        &self.values
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// The piecewise linear interpolant `Û(t)`.
    pub fn interpolate(&self, t: f64) -> Result<HElem> {
        let m = self.mesh.interval_containing(t)?;
        let (a, b) = (self.mesh.node(m), self.mesh.node(m + 1));
        let s = (t - a) / (b - a);
        let mut out = self.values[m].clone();
        out.axpy(s, &(&self.values[m + 1] - &self.values[m]));
        Ok(out)
    }

    /// Slopes `(U_{j+1} - U_j) / κ_j`.
    pub fn slopes(&self) -> Vec<HElem> {
        crate::l1::slopes(&self.mesh, &self.values).expect("lengths checked at construction")
    }

    /// CSV with one row `t, U_n[0], U_n[1], …` per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 0..self.values[0].dim() {
            let _ = write!(out, ",u{i}");
        }
        out.push('\n');
        for (t, u) in self.mesh.nodes().iter().zip(&self.values) {
            let _ = write!(out, "{t}");
            for c in u.as_slice() {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

enum Rows<'a> {
    Lags(Vec<f64>),
    L1(L1Context<'a>),
    Cq(WeightTable<'a>),
}

impl Rows<'_> {
    fn row(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            Rows::Lags(l) => Ok(l[..=n].iter().rev().copied().collect()),
            Rows::L1(ctx) => Ok(ctx.nodal_weights(n)),
            Rows::Cq(table) => table.row(n),
        }
    }
}

fn has_equal_steps(mesh: &TimeMesh) -> bool {
    mesh.max_step() - mesh.min_step() <= 1e-12 * mesh.max_step()
}

pub fn solve(problem: &Problem, mesh: &TimeMesh, scheme: Scheme) -> Result<Trajectory> {
    match scheme {
        Scheme::L1 => solve_l1(problem, mesh),
        Scheme::L1Corrected => solve_l1_corrected(problem, mesh),
        Scheme::Cq => solve_cq(problem, mesh),
    }
}

pub fn solve_l1(problem: &Problem, mesh: &TimeMesh) -> Result<Trajectory> {
    march(problem, mesh, Scheme::L1, l1_rows(problem, mesh)?, None)
}

pub fn solve_l1_corrected(problem: &Problem, mesh: &TimeMesh) -> Result<Trajectory> {
    let op = &problem.operator;
    let mut defect = &op.apply(&problem.u0)? - &problem.source_at(0.0);
    defect.scale(-0.5);
    march(problem, mesh, Scheme::L1Corrected, l1_rows(problem, mesh)?, Some(defect))
}

pub fn solve_cq(problem: &Problem, mesh: &TimeMesh) -> Result<Trajectory> {
    let table = WeightTable::new(CQContext::new(mesh, problem.beta)?)?;
    let rows = if table.is_shift_invariant() {
        let mut lags = table.row(mesh.intervals() - 1)?;
        lags.reverse();
        Rows::Lags(lags)
    } else {
        Rows::Cq(table)
    };
    march(problem, mesh, Scheme::Cq, rows, None)
}

fn l1_rows<'a>(problem: &Problem, mesh: &'a TimeMesh) -> Result<Rows<'a>> {
    let ctx = L1Context::new(mesh, problem.beta)?;
    Ok(if has_equal_steps(mesh) {
        let mut lags = ctx.nodal_weights(mesh.intervals() - 1);
        lags.reverse();
        Rows::Lags(lags)
    } else {
        Rows::L1(ctx)
    })
}

fn march(
    problem: &Problem,
    mesh: &TimeMesh,
    scheme: Scheme,
    rows: Rows<'_>,
    first_correction: Option<HElem>,
) -> Result<Trajectory> {
    let op = &problem.operator;
    let n_int = mesh.intervals();
    let mut values = Vec::with_capacity(n_int + 1);
    values.push(problem.u0.clone());
    let mut slopes: Vec<HElem> = Vec::with_capacity(n_int);
    for n in 0..n_int {
        let row = rows.row(n)?;
        let kappa = mesh.step(n);
        let alpha = row[n] / kappa;
        let mut rhs = problem.source_at(mesh.node(n + 1));
        if rhs.dim() != op.dim() {
            return Err(Error::DimensionMismatch { expected: op.dim(), got: rhs.dim() });
        }
        if n == 0 {
            if let Some(c) = &first_correction {
                rhs.axpy(1.0, c);
            }
        }
        rhs.axpy(alpha, &values[n]);
        for (w, d) in row[..n].iter().zip(&slopes) {
            rhs.axpy(-w, d);
        }
        let next = op.shifted_solve(alpha, &rhs)?;
        let mut d = &next - &values[n];
        d.scale(1.0 / kappa);
        slopes.push(d);
        values.push(next);
    }
    Trajectory::new(mesh.clone(), values, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cq::cq_weights_uniform;
    use crate::special::gamma;

    fn constant_source(v: HElem) -> TimeFn {
        Arc::new(move |_| v.clone())
    }

    fn scalar_problem(lambda: f64, beta: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static, u0: f64) -> Problem {
        Problem::new(
            SpaceOperator::scalar(lambda).unwrap(),
            beta,
            Arc::new(move |t| HElem::scalar(f(t))),
            HElem::scalar(u0),
        )
        .unwrap()
    }

    #[test]
    fn first_steps_by_hand() {
        let mesh = TimeMesh::uniform(1.0, 1).unwrap();
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 1.0);
        let c = 1.0 / gamma(1.5);
        let l1 = solve_l1(&p, &mesh).unwrap();
        assert!((l1.values()[1].value() - 0.5301589).abs() < 1e-7);
        assert!((l1.values()[1].value() - c / (c + 1.0)).abs() < 1e-15);
        let corr = solve_l1_corrected(&p, &mesh).unwrap();
        assert!((corr.values()[1].value() - 0.2952384).abs() < 1e-7);
        let cq = solve_cq(&p, &mesh).unwrap();
        assert!((cq.values()[1].value() - 0.5).abs() < 1e-15);
        assert_eq!(cq.scheme(), Scheme::Cq);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in [Scheme::L1, Scheme::L1Corrected, Scheme::Cq] {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!("bdf2".parse::<Scheme>().is_err());
    }

    #[test]
    fn steady_state_is_preserved() {
        let fem = SpaceOperator::fem(8).unwrap();
        let c = fem.interpolate(|x| x.sin() + 0.3 * (2.0 * x).sin()).unwrap();
        let ac = fem.apply(&c).unwrap();
        let p = Problem::new(fem, 0.4, constant_source(ac), c.clone()).unwrap();
        let mesh = TimeMesh::graded(1.0, 12, 2.0).unwrap();
        for scheme in [Scheme::L1, Scheme::L1Corrected, Scheme::Cq] {
            let tr = solve(&p, &mesh, scheme).unwrap();
            for u in tr.values() {
                assert!((u - &c).max_abs() <= 1e-11, "{scheme}");
            }
        }
    }

    #[test]
    fn correction_vanishes_for_compatible_data() {
        // A u0 = f(0)
        let p = scalar_problem(2.0, 0.6, |t| 2.0 + t, 1.0);
        let mesh = TimeMesh::graded(1.0, 10, 1.5).unwrap();
        let a = solve_l1(&p, &mesh).unwrap();
        let b = solve_l1_corrected(&p, &mesh).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn l1_collocates_exact_caputo_derivative() {
        let p = scalar_problem(1.5, 0.3, |t| (3.0 * t).cos(), 0.7);
        let mesh = TimeMesh::graded(1.0, 30, 2.5).unwrap();
        let tr = solve_l1(&p, &mesh).unwrap();
        let ctx = L1Context::new(&mesh, 0.3).unwrap();
        for n in 0..30 {
            let t = mesh.node(n + 1);
            let d = ctx.frac_derivative_at(tr.values(), t).unwrap().value();
            let f = p.source_at(t).value();
            let r = f - d - 1.5 * tr.values()[n + 1].value();
            assert!(r.abs() <= 1e-12 * (f.abs() + d.abs()).max(1.0), "n {n}: {r}");
        }
    }

    #[test]
    fn superposition() {
        let mesh = TimeMesh::graded(1.0, 16, 2.0).unwrap();
        let fem = SpaceOperator::fem(6).unwrap();
        let a = fem.interpolate(|x| x.sin()).unwrap();
        let b = fem.interpolate(|x| x * (std::f64::consts::PI - x)).unwrap();
        let (fa, fb) = (a.clone(), b.clone());
        let p1 = Problem::new(fem.clone(), 0.5, Arc::new(move |t| t * &fa), a.clone()).unwrap();
        let p2 = Problem::new(fem.clone(), 0.5, Arc::new(move |t| (1.0 - t) * &fb), b.clone()).unwrap();
        let (ga, gb) = (a.clone(), b.clone());
        let combo = Problem::new(
            fem,
            0.5,
            Arc::new(move |t| &(2.0 * t * &ga) + &(-3.0 * (1.0 - t) * &gb)),
            &(2.0 * &a) + &(-3.0 * &b),
        )
        .unwrap();
        for scheme in [Scheme::L1, Scheme::L1Corrected, Scheme::Cq] {
            let t1 = solve(&p1, &mesh, scheme).unwrap();
            let t2 = solve(&p2, &mesh, scheme).unwrap();
            let tc = solve(&combo, &mesh, scheme).unwrap();
            for n in 0..=16 {
                let lin = &(2.0 * &t1.values()[n]) + &(-3.0 * &t2.values()[n]);
                assert!((&lin - &tc.values()[n]).max_abs() <= 1e-12, "{scheme} n {n}");
            }
        }
    }

    #[test]
    fn homogeneous_decay_is_positive_and_monotone() {
        for &beta in &[0.2, 0.5, 0.8] {
            let p = scalar_problem(1.0, beta, |_| 0.0, 1.0);
            for mesh in [TimeMesh::uniform(1.0, 50).unwrap(), TimeMesh::graded(1.0, 50, 2.0).unwrap()] {
                for scheme in [Scheme::L1, Scheme::Cq] {
                    let v: Vec<f64> = solve(&p, &mesh, scheme).unwrap().values().iter().map(HElem::value).collect();
                    assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0), "{scheme} beta {beta}");
                }
            }
        }
    }

    #[test]
    fn cq_matches_classical_uniform_scheme() {
        let beta = 0.35;
        let n_int = 40;
        let mesh = TimeMesh::uniform(1.0, n_int).unwrap();
        let f = |t: f64| 1.0 + t.sin();
        let p = scalar_problem(2.0, beta, f, 0.5);
        let got = solve_cq(&p, &mesh).unwrap();
        // classical BE-CQ: Σ_{m} κ^{1-β} w_m D_{n-m} + λ U_{n+1} = f(t_{n+1})
        let kappa = 1.0 / n_int as f64;
        let w: Vec<f64> = (0..n_int).map(|m| cq_weights_uniform(kappa, m, beta)).collect();
        let mut u = vec![0.5];
        let mut d: Vec<f64> = Vec::new();
        for n in 0..n_int {
            let hist: f64 = (0..n).map(|j| w[n - j] * d[j]).sum();
            let alpha = w[0] / kappa;
            let next = (f((n + 1) as f64 * kappa) + alpha * u[n] - hist) / (alpha + 2.0);
            d.push((next - u[n]) / kappa);
            u.push(next);
        }
        for (a, b) in got.values().iter().zip(&u) {
            assert!((a.value() - b).abs() <= 1e-9 * b.abs(), "{} vs {b}", a.value());
        }
    }

    #[test]
    fn trajectory_checks_and_interpolates() {
        let mesh = TimeMesh::from_nodes(vec![0.0, 1.0, 3.0]).unwrap();
        assert!(Trajectory::new(mesh.clone(), vec![HElem::scalar(1.0)], Scheme::L1).is_err());
        let tr = Trajectory::new(mesh, vec![HElem::scalar(1.0), HElem::scalar(3.0), HElem::scalar(-1.0)], Scheme::L1)
            .unwrap();
        assert_eq!(tr.interpolate(0.5).unwrap().value(), 2.0);
        assert_eq!(tr.interpolate(2.0).unwrap().value(), 1.0);
        assert!(tr.interpolate(3.5).is_err());
        assert_eq!(tr.to_csv(), "t,u0\n0,1\n1,3\n3,-1\n");
    }

    #[test]
    fn missing_reference_is_reported() {
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 1.0);
        assert_eq!(p.exact_at(0.3), Err(Error::MissingReference));
    }
}
