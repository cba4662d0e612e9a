//! Residual-based a posteriori error estimators.
//!
//! With `Û` the piecewise linear interpolant of a trajectory, the residual is
//! `R(τ) = f(τ) - D_t^β Û(τ) - A Û(τ)`. The error `e = u - Û` then satisfies
//!
//! ```text
//! ∫_0^t ‖e‖² + |e|₁² ≤ C¹_{t,β} ∫_0^t g_{β,t}(τ)^{-1} ‖R(τ)‖² dτ + C²_{t,β} ‖u⁰ - U_0‖²,
//! ‖e(t)‖ ≤ ‖u⁰ - U_0‖ + C_{β,φ}/sin θ ∫_0^t (t - τ)^{β-1} ‖R(τ)‖ dτ,
//! ```
//!
//! and the outer integrals are approximated by compound midpoint rules with
//! `m_sub` points per mesh interval. For the second bound the weakly singular
//! kernel is integrated exactly over each sub-interval.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::l1::{power_difference, L1Context};
use crate::space::HElem;
use crate::special::gamma;
use crate::stepper::{Problem, Trajectory};

/// Quadrature for the exact error `E¹(t) ≈ (∫_0^t ‖u - Û‖²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorRule {
    /// `u` and `Û` sampled at the `m_sub` midpoints of every interval.
    #[default]
    Midpoint,
    /// `Σ_n κ_n ‖u(t_{n+1}) - U_{n+1}‖²`, nodal errors only.
    Nodal,
}

impl ErrorRule {
    pub fn name(self) -> &'static str {
        match self {
            Self::Midpoint => "midpoint",
            Self::Nodal => "nodal",
        }
    }
}

impl std::str::FromStr for ErrorRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "midpoint" => Ok(Self::Midpoint),
            "nodal" => Ok(Self::Nodal),
            other => Err(Error::Parse(format!("unknown error rule {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Midpoints per mesh interval.
    pub m_sub: usize,
    /// Sector angle of the `L^∞` bound; `None` picks the one minimizing the prefactor.
    pub theta_res: Option<f64>,
    pub error_rule: ErrorRule,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { m_sub: 4, theta_res: None, error_rule: ErrorRule::Midpoint }
    }
}

impl EstimatorConfig {
    pub fn with_m_sub(m_sub: usize) -> Self {
        Self { m_sub, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.m_sub == 0 {
            return Err(Error::InvalidParameter("m_sub must be at least 1".into()));
        }
        if let Some(th) = self.theta_res {
            if !(th > 0.0 && th < FRAC_PI_2) {
                return Err(Error::InvalidParameter(format!("sector angle {th} not in (0, π/2)")));
            }
        }
        Ok(())
    }
}

/// `g_{β,t}(τ) = ((t - τ)^{-β} + τ^{-β}) / Γ(1-β)`.
pub fn g_kernel(beta: f64, t: f64, tau: f64) -> f64 {
    ((t - tau).powf(-beta) + tau.powf(-beta)) / gamma(1.0 - beta)
}

/// `1 / g_{β,t}(τ)`, written so that it stays finite at both ends.
fn g_kernel_inv(beta: f64, gamma_1mb: f64, t: f64, tau: f64) -> f64 {
    let (a, b) = (tau.powf(beta), (t - tau).powf(beta));
    gamma_1mb * a * b / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub c1: f64,
    pub c2: f64,
    pub theta: f64,
    pub phi: f64,
    pub c_beta_phi: f64,
}

impl StabilityConstants {
    /// `C_{β,φ} / sin θ`.
    pub fn linf_prefactor(&self) -> f64 {
        self.c_beta_phi / self.theta.sin()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("fractional order {beta} not in (0, 1)")));
    }
    Ok(())
}

/// `(C¹_{t,β}, C²_{t,β})`.
pub fn l2_constants(beta: f64, t: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    let m = (2f64.powf(1.0 - beta) * gamma(1.0 - beta) * t.powf(beta)).max(1.0);
    Ok((2.0 * m, 2.0 * t.powf(1.0 - beta) / gamma(2.0 - beta) * m))
}

/// `(φ, C_{β,φ})` for a sector angle θ.
pub fn sector_constants(beta: f64, theta: f64) -> Result<(f64, f64)> {
    check_beta(beta)?;
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("sector angle {theta} not in (0, π/2)")));
    }
    let phi = (PI - (PI - theta) / beta).max(0.0);
    Ok((phi, phi.cos().powf(beta - 1.0) * gamma(1.0 - beta) / PI))
}

/// Grid minimizer of `C_{β,φ(θ)} / sin θ` over `θ_i = i (π/2) / 257`, `i = 1..=256`.
pub fn optimal_theta(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let mut best = (f64::INFINITY, 0.0);
    for i in 1..=256 {
        let theta = i as f64 * FRAC_PI_2 / 257.0;
        let (_, c) = sector_constants(beta, theta)?;
        let v = c / theta.sin();
        if v < best.0 {
            best = (v, theta);
        }
    }
    Ok(best.1)
}

pub fn stability_constants(beta: f64, t: f64, theta: f64) -> Result<StabilityConstants> {
    let (c1, c2) = l2_constants(beta, t)?;
    let (phi, c_beta_phi) = sector_constants(beta, theta)?;
    Ok(StabilityConstants { c1, c2, theta, phi, c_beta_phi })
}

/// `f(τ) - D_t^β Û(τ) - A Û(τ)`.
pub fn residual_at(traj: &Trajectory, problem: &Problem, tau: f64) -> Result<HElem> {
    let ctx = L1Context::new(traj.mesh(), problem.beta())?;
    residual_with(&ctx, &traj.slopes(), traj, problem, tau)
}

fn residual_with(
    ctx: &L1Context<'_>,
    slopes: &[HElem],
    traj: &Trajectory,
    problem: &Problem,
    tau: f64,
) -> Result<HElem> {
    if !(tau > 0.0) || tau > traj.mesh().horizon() {
        return Err(Error::TimeOutOfRange { t: tau, horizon: traj.mesh().horizon() });
    }
    let u = traj.interpolate(tau)?;
    let mut r = problem.source_at(tau);
    r.axpy(-1.0, &ctx.frac_derivative_from_slopes(slopes, tau)?);
    r.axpy(-1.0, &problem.operator().apply(&u)?);
    Ok(r)
}

/// Estimator and error values at the nodes of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries {
    pub times: Vec<f64>,
    pub e1_est: Vec<f64>,
    pub e2_est: Vec<f64>,
    pub e1: Option<Vec<f64>>,
    pub e2: Option<Vec<f64>>,
    /// Constants at the final time.
    pub constants: StabilityConstants,
}

impl EstimateSeries {
    /// Columns `t, E1, E1_est, E2, E2_est`; error cells are empty without a reference.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E1,E1_est,E2,E2_est\n");
        let cell = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|v| v[i].to_string()).unwrap_or_default();
        for i in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.times[i],
                cell(&self.e1, i),
                self.e1_est[i],
                cell(&self.e2, i),
                self.e2_est[i]
            );
        }
        out
    }
}

/// Estimates and errors at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub t: f64,
    pub e1_est: f64,
    pub e2_est: f64,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
}

/// Midpoint samples of one trajectory, shared by all evaluation times.
pub struct Estimator<'a> {
    traj: &'a Trajectory,
    problem: &'a Problem,
    cfg: EstimatorConfig,
    ctx: L1Context<'a>,
    slopes: Vec<HElem>,
    theta: f64,
    gamma_1mb: f64,
    initial_error: f64,
    // per standard sub-interval: [a, b], ‖R(mid)‖, ‖u - Û‖(mid)
    a: Vec<f64>,
    b: Vec<f64>,
    res: Vec<f64>,
    err: Option<Vec<f64>>,
    // ‖u(t_n) - U_n‖ under the nodal error rule
    nodal_err: Option<Vec<f64>>,
}

impl<'a> Estimator<'a> {
    pub fn new(traj: &'a Trajectory, problem: &'a Problem, cfg: EstimatorConfig) -> Result<Self> {
        cfg.validate()?;
        let beta = problem.beta();
        let ctx = L1Context::new(traj.mesh(), beta)?;
        let theta = match cfg.theta_res {
            Some(th) => th,
            None => optimal_theta(beta)?,
        };
        let op = problem.operator();
        let initial_error = op.norm(&(problem.u0() - &traj.values()[0]))?;
        let mut est = Self {
            traj,
            problem,
            cfg,
            ctx,
            slopes: traj.slopes(),
            theta,
            gamma_1mb: gamma(1.0 - beta),
            initial_error,
            a: Vec::new(),
            b: Vec::new(),
            res: Vec::new(),
            err: problem.has_exact().then(Vec::new),
            nodal_err: None,
        };
        if problem.has_exact() && cfg.error_rule == ErrorRule::Nodal {
            let mesh = traj.mesh();
            let errs = (0..mesh.nodes().len())
                .map(|n| op.norm(&(&problem.exact_at(mesh.node(n))? - &traj.values()[n])))
                .collect::<Result<Vec<_>>>()?;
            est.nodal_err = Some(errs);
        }
        let mesh = traj.mesh();
        for n in 0..mesh.intervals() {
            est.sample(mesh.node(n), mesh.node(n + 1))?;
        }
        Ok(est)
    }

    fn sample(&mut self, lo: f64, hi: f64) -> Result<()> {
        let (a, b, r, e) = self.samples_on(lo, hi)?;
        self.a.extend(a);
        self.b.extend(b);
        self.res.extend(r);
        if let (Some(dst), Some(e)) = (self.err.as_mut(), e) {
            dst.extend(e);
        }
        Ok(())
    }

    #[allow(clippy::type_complexity)]
    fn samples_on(&self, lo: f64, hi: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
        let m = self.cfg.m_sub;
        let h = (hi - lo) / m as f64;
        let op = self.problem.operator();
        let (mut av, mut bv, mut rv) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        let mut ev = self.err.as_ref().map(|_| Vec::with_capacity(m));
        for i in 0..m {
            let a = lo + i as f64 * h;
            let b = if i + 1 == m { hi } else { a + h };
            let mid = 0.5 * (a + b);
            let r = residual_with(&self.ctx, &self.slopes, self.traj, self.problem, mid)?;
            rv.push(op.norm(&r)?);
            if let Some(ev) = ev.as_mut() {
                let diff = &self.problem.exact_at(mid)? - &self.traj.interpolate(mid)?;
                ev.push(op.norm(&diff)?);
            }
            av.push(a);
            bv.push(b);
        }
        Ok((av, bv, rv, ev))
    }

    /// `Σ κ_n ‖e(t_{n+1})‖²` over the nodes up to `t`, plus `(t - t_m)‖e(t)‖²`
    /// when `t` lies inside `I_m`.
    fn nodal_l2_squared(&self, t: f64, err_t: f64) -> Result<f64> {
        let mesh = self.traj.mesh();
        let errs = self.nodal_err.as_ref().ok_or(Error::MissingReference)?;
        let (last, tail) = match mesh.node_index(t) {
            Some(n) => (n, 0.0),
            None => {
                let m = mesh.interval_containing(t)?;
                (m, (t - mesh.node(m)) * err_t * err_t)
            }
        };
        let mut sum = tail;
        for (n, e) in errs.iter().enumerate().take(last + 1).skip(1) {
            sum += mesh.step(n - 1) * e * e;
        }
        Ok(sum)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn constants(&self, t: f64) -> Result<StabilityConstants> {
        stability_constants(self.problem.beta(), t, self.theta)
    }

    /// Sub-intervals covering `[0, t]`: the standard ones up to the last node
    /// below `t`, plus fresh ones on the remainder.
    #[allow(clippy::type_complexity)]
    fn cover(&self, t: f64) -> Result<(usize, Option<(Vec<f64>, Vec<f64>, Vec<f64>, Option<Vec<f64>>)>)> {
        let mesh = self.traj.mesh();
        if !(t > 0.0) || t > mesh.horizon() {
            return Err(Error::TimeOutOfRange { t, horizon: mesh.horizon() });
        }
        if let Some(n) = mesh.node_index(t) {
            return Ok((n * self.cfg.m_sub, None));
        }
        let m = mesh.interval_containing(t)?;
        Ok((m * self.cfg.m_sub, Some(self.samples_on(mesh.node(m), t)?)))
    }

    /// `E¹_est`, `E²_est` and, with a reference, `E¹`, `E²` at any `t ∈ (0, T]`.
    pub fn at(&self, t: f64) -> Result<PointEstimate> {
        let (count, extra) = self.cover(t)?;
        let beta = self.problem.beta();
        let k = self.constants(t)?;
        let t = self.traj.mesh().node_index(t).map(|n| self.traj.mesh().node(n)).unwrap_or(t);

        let mut q = 0.0;
        let mut lin = 0.0;
        let mut e1sq = 0.0;
        let mut add = |a: f64, b: f64, r: f64, e: Option<f64>| {
            let mid = 0.5 * (a + b);
            q += (b - a) * g_kernel_inv(beta, self.gamma_1mb, t, mid) * r * r;
            lin += r * power_difference(t - a, b - a, beta) / beta;
            if let Some(e) = e {
                e1sq += (b - a) * e * e;
            }
        };
        for i in 0..count {
            add(self.a[i], self.b[i], self.res[i], self.err.as_ref().map(|e| e[i]));
        }
        if let Some((a, b, r, e)) = &extra {
            for i in 0..a.len() {
                add(a[i], b[i], r[i], e.as_ref().map(|e| e[i]));
            }
        }
        let e1_est = (k.c1 * q + k.c2 * self.initial_error.powi(2)).sqrt();
        let e2_est = self.initial_error + k.linf_prefactor() * lin;
        let (e1, e2) = if self.problem.has_exact() {
            let op = self.problem.operator();
            let diff = &self.problem.exact_at(t)? - &self.traj.interpolate(t)?;
            let e2 = op.norm(&diff)?;
            let e1sq = match self.cfg.error_rule {
                ErrorRule::Midpoint => e1sq,
                ErrorRule::Nodal => self.nodal_l2_squared(t, e2)?,
            };
            (Some(e1sq.sqrt()), Some(e2))
        } else {
            (None, None)
        };
        Ok(PointEstimate { t, e1_est, e2_est, e1, e2 })
    }

    /// Values at every node; position 0 holds `0` and `‖u⁰ - U_0‖`.
    pub fn series(&self) -> Result<EstimateSeries> {
        let mesh = self.traj.mesh();
        let n_nodes = mesh.nodes().len();
        let exact = self.problem.has_exact();
        let mut s = EstimateSeries {
            times: mesh.nodes().to_vec(),
            e1_est: Vec::with_capacity(n_nodes),
            e2_est: Vec::with_capacity(n_nodes),
            e1: exact.then(|| Vec::with_capacity(n_nodes)),
            e2: exact.then(|| Vec::with_capacity(n_nodes)),
            constants: self.constants(mesh.horizon())?,
        };
        s.e1_est.push(0.0);
        s.e2_est.push(self.initial_error);
        if let (Some(e1), Some(e2)) = (s.e1.as_mut(), s.e2.as_mut()) {
            e1.push(0.0);
            let op = self.problem.operator();
            e2.push(op.norm(&(&self.problem.exact_at(0.0)? - &self.traj.values()[0]))?);
        }
        for n in 1..n_nodes {
            let p = self.at(mesh.node(n))?;
            s.e1_est.push(p.e1_est);
            s.e2_est.push(p.e2_est);
            if let (Some(e1), Some(e2)) = (s.e1.as_mut(), s.e2.as_mut()) {
                e1.push(p.e1.expect("reference present"));
                e2.push(p.e2.expect("reference present"));
            }
        }
        Ok(s)
    }
}

/// `E¹_est(t)`.
pub fn estimate_l2(traj: &Trajectory, problem: &Problem, t: f64, cfg: EstimatorConfig) -> Result<f64> {
    Ok(Estimator::new(traj, problem, cfg)?.at(t)?.e1_est)
}

/// `E²_est(t)`.
pub fn estimate_linf(traj: &Trajectory, problem: &Problem, t: f64, cfg: EstimatorConfig) -> Result<f64> {
    Ok(Estimator::new(traj, problem, cfg)?.at(t)?.e2_est)
}

/// `(E¹(t_n), E²(t_n))` at every node.
pub fn exact_errors(traj: &Trajectory, problem: &Problem, cfg: EstimatorConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if !problem.has_exact() {
        return Err(Error::MissingReference);
    }
    let s = Estimator::new(traj, problem, cfg)?.series()?;
    Ok((s.e1.expect("reference present"), s.e2.expect("reference present")))
}

pub fn estimate_series(traj: &Trajectory, problem: &Problem, cfg: EstimatorConfig) -> Result<EstimateSeries> {
    Estimator::new(traj, problem, cfg)?.series()
}

/// `log₂(e_N / e_{2N})` between successive rows.
pub fn eoc(errors: &[f64], ns: &[usize]) -> Result<Vec<f64>> {
    if errors.len() != ns.len() {
        return Err(Error::DimensionMismatch { expected: ns.len(), got: errors.len() });
    }
    if let Some(&e) = errors.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("error {e} must be positive")));
    }
    ns.windows(2)
        .zip(errors.windows(2))
        .map(|(n, e)| {
            if n[1] != 2 * n[0] {
                return Err(Error::InvalidParameter(format!("{} does not double {}", n[1], n[0])));
            }
            Ok((e[0] / e[1]).log2())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TimeMesh;
    use crate::space::SpaceOperator;
    use crate::stepper::{solve, solve_l1, solve_l1_corrected, Scheme};
    use std::sync::Arc;

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
    fn constant_examples() {
        let g = g_kernel(0.5, 1.0, 0.5);
        assert!((g - 1.595769).abs() < 1e-6);
        assert!((g - 2.0 * 2f64.sqrt() / PI.sqrt()).abs() < 1e-14);
        let k = stability_constants(0.5, 1.0, PI / 4.0).unwrap();
        assert!((k.c1 - 5.013257).abs() < 1e-6);
        assert!((k.c2 - 5.656854).abs() < 1e-6);
        assert_eq!(k.phi, 0.0);
        assert!((k.c_beta_phi - 0.564190).abs() < 1e-6);
        assert!(stability_constants(0.5, 1.0, 0.0).is_err());
        assert!(stability_constants(1.0, 1.0, 0.3).is_err());
        assert!(stability_constants(0.5, 0.0, 0.3).is_err());
    }

    #[test]
    fn inverse_kernel_matches_direct_form() {
        for &beta in &[0.2, 0.5, 0.8] {
            for &tau in &[0.01, 0.3, 0.5, 0.99] {
                let direct = 1.0 / g_kernel(beta, 1.0, tau);
                let stable = g_kernel_inv(beta, gamma(1.0 - beta), 1.0, tau);
                assert!(((direct - stable) / direct).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn optimal_theta_minimizes_prefactor() {
        for &beta in &[0.2, 0.5, 0.8] {
            let th = optimal_theta(beta).unwrap();
            let best = stability_constants(beta, 1.0, th).unwrap().linf_prefactor();
            for i in 1..=256 {
                let other = i as f64 * FRAC_PI_2 / 257.0;
                assert!(stability_constants(beta, 1.0, other).unwrap().linf_prefactor() >= best);
            }
        }
    }

    #[test]
    fn l1_residual_vanishes_at_nodes() {
        let p = scalar_problem(1.0, 0.4, |t| 1.0 + t.sin(), 1.0);
        let mesh = TimeMesh::graded(1.0, 20, 2.0).unwrap();
        let tr = solve_l1(&p, &mesh).unwrap();
        for n in 1..=20 {
            let r = residual_at(&tr, &p, mesh.node(n)).unwrap().value();
            assert!(r.abs() <= 1e-12, "node {n}: {r}");
        }
        assert!(residual_at(&tr, &p, 0.0).is_err());
        assert!(residual_at(&tr, &p, 1.5).is_err());
    }

    #[test]
    fn corrected_first_residual() {
        let lambda = 3.0;
        let p = scalar_problem(lambda, 0.5, |t| 0.5 + t, 2.0);
        let mesh = TimeMesh::uniform(1.0, 5).unwrap();
        let tr = solve_l1_corrected(&p, &mesh).unwrap();
        let r = residual_at(&tr, &p, mesh.node(1)).unwrap().value();
        let expect = 0.5 * (lambda * 2.0 - 0.5);
        assert!((r - expect).abs() < 1e-12, "{r} vs {expect}");
    }

    fn constant_residual_trajectory(mesh: &TimeMesh, r0: f64) -> (Problem, Trajectory) {
        // U ≡ c, f = A c + r0
        let c = 1.7;
        let p = scalar_problem(2.0, 0.6, move |_| 2.0 * c + r0, c);
        let tr = Trajectory::new(mesh.clone(), vec![HElem::scalar(c); mesh.nodes().len()], Scheme::L1).unwrap();
        (p, tr)
    }

    #[test]
    fn zero_residual_gives_zero_estimates() {
        let mesh = TimeMesh::graded(1.0, 9, 1.5).unwrap();
        let (p, tr) = constant_residual_trajectory(&mesh, 0.0);
        let s = estimate_series(&tr, &p, EstimatorConfig::default()).unwrap();
        assert!(s.e1_est.iter().chain(&s.e2_est).all(|&v| v == 0.0), "{s:?}");
        assert_eq!(residual_at(&tr, &p, 0.37).unwrap().value(), 0.0);
    }

    #[test]
    fn linf_estimate_for_constant_residual() {
        let r0 = 0.25;
        let beta = 0.6;
        for mesh in [TimeMesh::uniform(1.0, 1).unwrap(), TimeMesh::graded(1.0, 13, 2.2).unwrap()] {
            let (p, tr) = constant_residual_trajectory(&mesh, r0);
            let cfg = EstimatorConfig { m_sub: 3, theta_res: Some(0.7), ..Default::default() };
            let pref = stability_constants(beta, 1.0, 0.7).unwrap().linf_prefactor();
            let s = estimate_series(&tr, &p, cfg).unwrap();
            for (n, &t) in mesh.nodes().iter().enumerate().skip(1) {
                let expect = pref * r0 * t.powf(beta) / beta;
                assert!((s.e2_est[n] - expect).abs() <= 1e-13 * expect, "{} vs {expect}", s.e2_est[n]);
            }
            assert!(s.e2_est.windows(2).all(|w| w[1] >= w[0]));
            let off = estimate_linf(&tr, &p, 0.43, cfg).unwrap();
            assert!((off - pref * r0 * 0.43f64.powf(beta) / beta).abs() < 1e-13);
        }
    }

    #[test]
    fn l2_estimate_for_constant_residual_converges_to_integral() {
        // ∫_0^1 g^{-1} dτ for β = 1/2 is Γ(1/2) ∫ √(τ(1-τ)) / (√τ + √(1-τ)) dτ
        let beta = 0.5;
        let mesh = TimeMesh::uniform(1.0, 64).unwrap();
        let p = scalar_problem(1.0, beta, |_| 1.0 + 0.5, 1.0);
        let tr = Trajectory::new(mesh.clone(), vec![HElem::scalar(1.0); 65], Scheme::L1).unwrap();
        let rule = crate::quadrature::GaussLegendre::new(40);
        // τ = sin²φ removes the endpoint square roots
        let integral = rule.integrate(0.0, FRAC_PI_2, |phi| {
            let (s, c) = phi.sin_cos();
            PI.sqrt() * s * c / (s + c) * 2.0 * s * c
        });
        let (c1, _) = l2_constants(beta, 1.0).unwrap();
        let expect = (c1 * 0.25 * integral).sqrt();
        let err = |m| {
            let est = estimate_l2(&tr, &p, 1.0, EstimatorConfig::with_m_sub(m)).unwrap();
            ((est - expect) / expect).abs()
        };
        let (e8, e16) = (err(8), err(16));
        assert!(e8 < 1e-4, "{e8}");
        assert!(e16 < 0.5 * e8, "{e8} {e16}");
    }

    #[test]
    fn nodal_error_rule() {
        // exact u = t, trajectory carries a known error at every node
        let mesh = TimeMesh::from_nodes(vec![0.0, 0.1, 0.4, 1.0]).unwrap();
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 0.0).with_exact(Arc::new(HElem::scalar));
        let vals = [0.0, 0.1 + 0.01, 0.4 - 0.02, 1.0 + 0.03].map(HElem::scalar).to_vec();
        let tr = Trajectory::new(mesh, vals, Scheme::L1).unwrap();
        let cfg = EstimatorConfig { error_rule: ErrorRule::Nodal, ..Default::default() };
        let est = Estimator::new(&tr, &p, cfg).unwrap();
        let node = est.at(0.4).unwrap().e1.unwrap();
        assert!((node - (0.1 * 1e-4 + 0.3 * 4e-4f64).sqrt()).abs() < 1e-15);
        // inside I_2 the error of Û at t = 0.7 is -0.02 + 0.5·0.05
        let inside = est.at(0.7).unwrap().e1.unwrap();
        let e = 0.005f64;
        assert!((inside - (0.1 * 1e-4 + 0.3 * 4e-4 + 0.3 * e * e).sqrt()).abs() < 1e-15);
        let s = est.series().unwrap();
        assert_eq!(s.e1.unwrap()[2], node);
        assert_eq!("nodal".parse::<ErrorRule>().unwrap(), ErrorRule::Nodal);
        assert!("simpson".parse::<ErrorRule>().is_err());
    }

    #[test]
    fn initial_error_enters_both_estimates() {
        let mesh = TimeMesh::uniform(1.0, 4).unwrap();
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 1.0);
        let mut tr = solve_l1(&p, &mesh).unwrap();
        let mut vals = tr.values().to_vec();
        vals[0] = HElem::scalar(1.1);
        tr = Trajectory::new(mesh, vals, Scheme::L1).unwrap();
        let s = estimate_series(&tr, &p, EstimatorConfig::default()).unwrap();
        assert!((s.e2_est[0] - 0.1).abs() < 1e-15);
        assert!(s.e2_est[1] > 0.1);
        let (_, c2) = l2_constants(0.5, 0.25).unwrap();
        assert!(s.e1_est[1] >= (c2 * 0.01).sqrt());
    }

    #[test]
    fn reliability_on_mittag_leffler_decay() {
        use crate::special::mittag_leffler;
        for (scheme, beta) in [(Scheme::L1, 0.8), (Scheme::Cq, 0.3), (Scheme::L1, 0.3)] {
            let p = scalar_problem(1.0, beta, |_| 0.0, 1.0)
                .with_exact(Arc::new(move |t| HElem::scalar(mittag_leffler(beta, -t.powf(beta)).unwrap())));
            let mesh = TimeMesh::graded(1.0, 20, 2.0).unwrap();
            let tr = solve(&p, &mesh, scheme).unwrap();
            let s = estimate_series(&tr, &p, EstimatorConfig::with_m_sub(8)).unwrap();
            let (e1, e2) = (s.e1.as_ref().unwrap(), s.e2.as_ref().unwrap());
            for n in 1..=20 {
                assert!(e1[n] <= s.e1_est[n], "{scheme} {beta} node {n}");
                assert!(e2[n] <= s.e2_est[n], "{scheme} {beta} node {n}");
            }
            let mid = Estimator::new(&tr, &p, EstimatorConfig::with_m_sub(8)).unwrap().at(0.5).unwrap();
            assert!(mid.e1.unwrap() <= mid.e1_est && mid.e2.unwrap() <= mid.e2_est);
        }
    }

    #[test]
    fn exact_errors_need_reference() {
        let mesh = TimeMesh::uniform(1.0, 4).unwrap();
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 1.0);
        let tr = solve_l1(&p, &mesh).unwrap();
        assert_eq!(exact_errors(&tr, &p, EstimatorConfig::default()), Err(Error::MissingReference));
    }

    #[test]
    fn self_reference_has_zero_error() {
        let mesh = TimeMesh::graded(1.0, 6, 2.0).unwrap();
        let p = scalar_problem(1.0, 0.5, |t| t, 1.0);
        let tr = solve_l1(&p, &mesh).unwrap();
        let copy = tr.clone();
        let p = p.with_exact(Arc::new(move |t| copy.interpolate(t).unwrap()));
        let (e1, e2) = exact_errors(&tr, &p, EstimatorConfig::default()).unwrap();
        assert!(e2.iter().all(|&e| e == 0.0));
        assert_eq!(e1[0], 0.0);
    }

    #[test]
    fn eoc_examples() {
        assert_eq!(eoc(&[0.04, 0.01], &[10, 20]).unwrap(), vec![2.0]);
        assert_eq!(eoc(&[0.01, 0.01], &[10, 20]).unwrap(), vec![0.0]);
        assert!((eoc(&[0.0069, 0.0032], &[10, 20]).unwrap()[0] - 1.108).abs() < 1e-3);
        assert!(eoc(&[0.04, 0.01], &[10, 30]).is_err());
        assert!(eoc(&[0.04, 0.0], &[10, 20]).is_err());
        assert!(eoc(&[0.04], &[10]).unwrap().is_empty());
    }

    #[test]
    fn bad_config() {
        let mesh = TimeMesh::uniform(1.0, 2).unwrap();
        let p = scalar_problem(1.0, 0.5, |_| 0.0, 1.0);
        let tr = solve_l1(&p, &mesh).unwrap();
        assert!(Estimator::new(&tr, &p, EstimatorConfig { m_sub: 0, ..Default::default() }).is_err());
        assert!(Estimator::new(&tr, &p, EstimatorConfig { m_sub: 2, theta_res: Some(2.0), ..Default::default() }).is_err());
    }
}
