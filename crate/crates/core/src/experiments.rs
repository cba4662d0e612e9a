//! Manufactured test problems and the convergence and adaptive study drivers.
//!
//! A study is described by a [`StudyConfig`], read from a flat `key = value`
//! file and overridable key by key. Results are plain CSV text; every float is
//! written with `{}` so that tables parse back to the same bits.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use crate::adaptive::{adapt, AdaptiveConfig, AdaptiveTrace};
use crate::cq::{cq_weights_uniform, CQContext};
use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::mesh::TimeMesh;
use crate::space::{HElem, SpaceOperator};
use crate::special::{gamma, mittag_leffler};
use crate::stepper::{solve, solve_l1, Problem, Scheme, TimeFn, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    /// `D^β u + λu = 0`, `u = E_β(-λt^β) u⁰`.
    OdeMl,
    /// `D^β u + u = 2 cos t`, `u(0) = 1`; no closed form.
    OdeCos,
    /// `D^β u + λu = f` with a kink of the solution at `t = r`.
    OdeHeaviside,
    /// The same solution profile times `sin x` on `(0, π)` with quadratic elements.
    PdeHeaviside,
}

impl ProblemId {
    pub const ALL: [ProblemId; 4] = [Self::OdeMl, Self::OdeCos, Self::OdeHeaviside, Self::PdeHeaviside];

    pub fn name(self) -> &'static str {
        match self {
            Self::OdeMl => "ode_ml",
            Self::OdeCos => "ode_cos",
            Self::OdeHeaviside => "ode_heaviside",
            Self::PdeHeaviside => "pde_heaviside",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown problem {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub id: ProblemId,
    pub beta: f64,
    /// Used by the scalar problems other than `ode_cos`.
    pub lambda: f64,
    /// Jump time of the Heaviside problems.
    pub r: f64,
    pub horizon: f64,
    /// Finite elements on `(0, π)`, `pde_heaviside` only.
    pub elements: usize,
    /// Initial value of `ode_ml`.
    pub u0: f64,
}

impl ProblemSpec {
    pub fn new(id: ProblemId, beta: f64) -> Self {
        Self { id, beta, lambda: 1.0, r: 0.28, horizon: 1.0, elements: 64, u0: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta {} not in (0, 1)", self.beta));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon {} must be positive", self.horizon));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda {} must be positive", self.lambda));
        }
        let heaviside = matches!(self.id, ProblemId::OdeHeaviside | ProblemId::PdeHeaviside);
        if heaviside && !(self.r > 0.0 && self.r < self.horizon) {
            return bad(format!("jump time {} not in (0, {})", self.r, self.horizon));
        }
        if self.id == ProblemId::PdeHeaviside && self.elements == 0 {
            return bad("element count must be positive".into());
        }
        if !self.u0.is_finite() {
            return bad(format!("initial value {} not finite", self.u0));
        }
        Ok(())
    }
}

/// `1 + t^β + H(t-r)(t-r)^β` with `H(0) = 1`.
pub fn heaviside_profile(beta: f64, r: f64, t: f64) -> f64 {
    let jump = if t >= r { (t - r).powf(beta) } else { 0.0 };
    1.0 + t.powf(beta) + jump
}

/// `Γ(β+1)(1 + H(t-r))`, the Caputo derivative of [`heaviside_profile`].
pub fn heaviside_derivative(beta: f64, r: f64, t: f64) -> f64 {
    gamma(beta + 1.0) * if t >= r { 2.0 } else { 1.0 }
}

pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    spec.validate()?;
    let beta = spec.beta;
    match spec.id {
        ProblemId::OdeMl => {
            let (lambda, u0) = (spec.lambda, spec.u0);
            let exact: TimeFn = Arc::new(move |t: f64| {
                let e = mittag_leffler(beta, -lambda * t.powf(beta)).expect("argument on the negative axis");
                HElem::scalar(e * u0)
            });
            Ok(Problem::new(SpaceOperator::scalar(lambda)?, beta, Arc::new(|_| HElem::scalar(0.0)), HElem::scalar(u0))?
                .with_exact(exact))
        }
        ProblemId::OdeCos => {
            let base = cos_problem(beta)?;
            let reference = cos_reference(beta, spec.horizon)?;
            let exact: TimeFn = Arc::new(move |t: f64| reference.interpolate(t).expect("time inside the reference mesh"));
            Ok(base.with_exact(exact))
        }
        ProblemId::OdeHeaviside => {
            let (lambda, r) = (spec.lambda, spec.r);
            let source: TimeFn = Arc::new(move |t: f64| {
                HElem::scalar(lambda * heaviside_profile(beta, r, t) + heaviside_derivative(beta, r, t))
            });
            let exact: TimeFn = Arc::new(move |t: f64| HElem::scalar(heaviside_profile(beta, r, t)));
            Ok(Problem::new(SpaceOperator::scalar(lambda)?, beta, source, HElem::scalar(1.0))?.with_exact(exact))
        }
        ProblemId::PdeHeaviside => {
            let r = spec.r;
            let op = SpaceOperator::fem(spec.elements)?;
            let sine = Arc::new(op.l2_project(f64::sin)?);
            let s = Arc::clone(&sine);
            // -Δ sin = sin, so the time profile obeys the scalar problem with λ = 1
            let source: TimeFn = Arc::new(move |t: f64| {
                (heaviside_profile(beta, r, t) + heaviside_derivative(beta, r, t)) * s.as_ref()
            });
            let s = Arc::clone(&sine);
            let exact: TimeFn = Arc::new(move |t: f64| heaviside_profile(beta, r, t) * s.as_ref());
            Ok(Problem::new(op, beta, source, sine.as_ref().clone())?.with_exact(exact))
        }
    }
}

fn cos_problem(beta: f64) -> Result<Problem> {
    Problem::new(
        SpaceOperator::scalar(1.0)?,
        beta,
        Arc::new(|t: f64| HElem::scalar(2.0 * t.cos())),
        HElem::scalar(1.0),
    )
}

/// Intervals and grading of the fine mesh behind the `ode_cos` reference.
pub const COS_REFERENCE_INTERVALS: usize = 20480;
pub const COS_REFERENCE_GRADING: f64 = 2.0;

type ReferenceCache = Mutex<HashMap<(u64, u64), Arc<Trajectory>>>;

/// L1 solution of `ode_cos` on the fine graded mesh, computed once per
/// `(β, T)` and process.
pub fn cos_reference(beta: f64, horizon: f64) -> Result<Arc<Trajectory>> {
    static CACHE: OnceLock<ReferenceCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (beta.to_bits(), horizon.to_bits());
    if let Some(t) = cache.lock().expect("reference cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let mesh = TimeMesh::graded(horizon, COS_REFERENCE_INTERVALS, COS_REFERENCE_GRADING)?;
    let traj = Arc::new(solve_l1(&cos_problem(beta)?, &mesh)?);
    let mut guard = cache.lock().expect("reference cache poisoned");
    Ok(Arc::clone(guard.entry(key).or_insert(traj)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshFamily {
    Uniform,
    /// `t_j = T (j/N)^k`.
    Graded(f64),
    /// Mark-and-bisect from a uniform start.
    Adaptive,
}

impl MeshFamily {
    pub fn build(self, horizon: f64, intervals: usize) -> Result<TimeMesh> {
        match self {
            Self::Uniform | Self::Adaptive => TimeMesh::uniform(horizon, intervals),
            Self::Graded(k) => TimeMesh::graded(horizon, intervals, k),
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => f.write_str("uniform"),
            Self::Graded(k) => write!(f, "{k}"),
            Self::Adaptive => f.write_str("adaptive"),
        }
    }
}

impl FromStr for MeshFamily {
    type Err = Error;

    /// `uniform`, `adaptive` or a grading exponent `k ≥ 1` (`1` is uniform).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" => Ok(Self::Uniform),
            "adaptive" => Ok(Self::Adaptive),
            other => {
                let k: f64 = parse_value("grading", other)?;
                if !(k >= 1.0) || !k.is_finite() {
                    return Err(Error::Parse(format!("grading {k} must be at least 1")));
                }
                Ok(if k == 1.0 { Self::Uniform } else { Self::Graded(k) })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    pub scheme: Scheme,
    pub family: MeshFamily,
    /// Interval counts of a convergence study, increasing.
    pub n_list: Vec<usize>,
    pub estimator: EstimatorConfig,
    /// Measurement time; `None` means `T/2`.
    pub eval_time: Option<f64>,
    pub theta_mark: f64,
    /// Interval budget of an adaptive study.
    pub budget: usize,
    /// Intervals of the uniform mesh an adaptive study starts from.
    pub initial_intervals: usize,
    pub out: Option<String>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::new(ProblemId::OdeMl, 0.5),
            scheme: Scheme::L1,
            family: MeshFamily::Uniform,
            n_list: vec![10, 20, 40, 80, 160, 320],
            estimator: EstimatorConfig::with_m_sub(8),
            eval_time: None,
            theta_mark: AdaptiveConfig::DEFAULT_THETA,
            budget: 512,
            initial_intervals: AdaptiveConfig::DEFAULT_INITIAL_INTERVALS,
            out: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e| Error::Parse(format!("{key} = {value:?}: {e}")))
}

impl StudyConfig {
    pub const KEYS: [&'static str; 17] = [
        "problem",
        "scheme",
        "beta",
        "lambda",
        "r",
        "T",
        "elements",
        "u0",
        "grading",
        "n_list",
        "m_sub",
        "theta_res",
        "e1_rule",
        "eval_time",
        "theta_mark",
        "budget",
        "initial_n",
    ];

    /// Sets one key; see [`Self::KEYS`] and `out`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "problem" => self.problem.id = value.parse()?,
            "scheme" => self.scheme = value.parse()?,
            "beta" => self.problem.beta = parse_value(key, value)?,
            "lambda" => self.problem.lambda = parse_value(key, value)?,
            "r" => self.problem.r = parse_value(key, value)?,
            "T" => self.problem.horizon = parse_value(key, value)?,
            "elements" => self.problem.elements = parse_value(key, value)?,
            "u0" => self.problem.u0 = parse_value(key, value)?,
            "grading" => self.family = value.parse()?,
            "n_list" => {
                self.n_list = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_value(key, s))
                    .collect::<Result<_>>()?
            }
            "m_sub" => self.estimator.m_sub = parse_value(key, value)?,
            "theta_res" => self.estimator.theta_res = Some(parse_value(key, value)?),
            "e1_rule" => self.estimator.error_rule = value.parse()?,
            "eval_time" => self.eval_time = Some(parse_value(key, value)?),
            "theta_mark" => self.theta_mark = parse_value(key, value)?,
            "budget" => self.budget = parse_value(key, value)?,
            "initial_n" => self.initial_intervals = parse_value(key, value)?,
            "out" => self.out = Some(value.to_string()),
            other => return Err(Error::Parse(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and text
    /// after `#` are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn eval_time(&self) -> f64 {
        self.eval_time.unwrap_or(0.5 * self.problem.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.n_list.is_empty() {
            return Err(Error::InvalidParameter("empty N sequence".into()));
        }
        if self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!("N sequence {:?} not positive and increasing", self.n_list)));
        }
        let t = self.eval_time();
        if !(t > 0.0 && t <= self.problem.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: self.problem.horizon });
        }
        Ok(())
    }
}

/// One row of a convergence table. Error cells are `None` without a reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub e1: Option<f64>,
    pub e1_est: f64,
    pub e2: Option<f64>,
    pub e2_est: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

fn rate(prev: Option<f64>, cur: Option<f64>, n0: usize, n1: usize) -> Option<f64> {
    match (prev, cur) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (n1 as f64 / n0 as f64).ln()),
        _ => None,
    }
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl ConvergenceTable {
    pub const HEADER: &'static str = "N,E1,eoc,E1_est,eoc,E2,eoc,E2_est,eoc";

    /// `log(e_{i-1}/e_i) / log(N_i/N_{i-1})` per column, `None` in the first row.
    /// Columns are `E1, E1_est, E2, E2_est`.
    pub fn eoc(&self) -> Vec<[Option<f64>; 4]> {
        let cols = |r: &ConvergenceRow| [r.e1, Some(r.e1_est), r.e2, Some(r.e2_est)];
        let mut out = vec![[None; 4]];
        for w in self.rows.windows(2) {
            let (a, b) = (cols(&w[0]), cols(&w[1]));
            out.push(std::array::from_fn(|c| rate(a[c], b[c], w[0].n, w[1].n)));
        }
        out.truncate(self.rows.len());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for (r, e) in self.rows.iter().zip(self.eoc()) {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                opt_cell(r.e1),
                opt_cell(e[0]),
                r.e1_est,
                opt_cell(e[1]),
                opt_cell(r.e2),
                opt_cell(e[2]),
                r.e2_est,
                opt_cell(e[3])
            );
        }
        out
    }

    /// Reads the output of [`Self::to_csv`]; eoc cells are recomputed, not stored.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == Self::HEADER => {}
            other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_value("cell", s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            if c.len() != 9 {
                return Err(Error::Parse(format!("expected 9 cells, got {}: {line:?}", c.len())));
            }
            rows.push(ConvergenceRow {
                n: parse_value("N", c[0])?,
                e1: opt(c[1])?,
                e1_est: parse_value("E1_est", c[3])?,
                e2: opt(c[5])?,
                e2_est: parse_value("E2_est", c[7])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Solves on each mesh of the sequence and measures at `cfg.eval_time()`.
pub fn run_convergence(cfg: &StudyConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    if cfg.family == MeshFamily::Adaptive {
        return Err(Error::InvalidParameter("a convergence study needs a uniform or graded family".into()));
    }
    let problem = make_problem(&cfg.problem)?;
    let t = cfg.eval_time();
    let mut rows = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let mesh = cfg.family.build(cfg.problem.horizon, n)?;
        let traj = solve(&problem, &mesh, cfg.scheme)?;
        let p = Estimator::new(&traj, &problem, cfg.estimator)?.at(t)?;
        rows.push(ConvergenceRow { n, e1: p.e1, e1_est: p.e1_est, e2: p.e2, e2_est: p.e2_est });
    }
    Ok(ConvergenceTable { rows })
}

/// Uniform-mesh values at the interval count of one adaptive iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineRow {
    pub n: usize,
    pub e_max: Option<f64>,
    pub e_max_est: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveStudy {
    pub trace: AdaptiveTrace,
    pub baseline: Vec<BaselineRow>,
}

impl AdaptiveStudy {
    /// Columns `N, e_max, e_max_est` of the uniform runs.
    pub fn baseline_csv(&self) -> String {
        let mut out = String::from("N,e_max,e_max_est\n");
        for b in &self.baseline {
            let _ = writeln!(out, "{},{},{}", b.n, opt_cell(b.e_max), b.e_max_est);
        }
        out
    }

    /// Step sizes of the final mesh as `t_left,step`.
    pub fn steps_csv(&self) -> String {
        let mesh = self.trace.last().mesh();
        let mut out = String::from("t,step\n");
        for n in 0..mesh.intervals() {
            let _ = writeln!(out, "{},{}", mesh.node(n), mesh.step(n));
        }
        out
    }
}

fn max_over_nodes(values: &[f64]) -> f64 {
    values[1..].iter().copied().fold(0.0, f64::max)
}

/// Runs the adaptive loop and a uniform baseline at every interval count it visits.
pub fn run_adaptive(cfg: &StudyConfig) -> Result<AdaptiveStudy> {
    cfg.problem.validate()?;
    let problem = make_problem(&cfg.problem)?;
    let horizon = cfg.problem.horizon;
    let acfg = AdaptiveConfig {
        theta_mark: cfg.theta_mark,
        max_intervals: cfg.budget,
        target: None,
        initial_mesh: TimeMesh::uniform(horizon, cfg.initial_intervals)?,
    };
    let trace = adapt(&problem, cfg.scheme, &acfg, cfg.estimator)?;
    let mut baseline = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let n = step.intervals();
        let traj = solve(&problem, &TimeMesh::uniform(horizon, n)?, cfg.scheme)?;
        let s = Estimator::new(&traj, &problem, cfg.estimator)?.series()?;
        baseline.push(BaselineRow { n, e_max: s.e2.as_deref().map(max_over_nodes), e_max_est: max_over_nodes(&s.e2_est) });
    }
    Ok(AdaptiveStudy { trace, baseline })
}

/// Outcome of one built-in consistency check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, value: f64, tol: f64) -> Check {
    Check { name: name.into(), passed: value <= tol, detail: format!("{value:e} (tolerance {tol:e})") }
}

/// Quick internal consistency checks: weight routes, composition, FEM spectrum.
pub fn selftest() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for beta in [0.2, 0.5, 0.8] {
        let mut worst_uniform = 0.0f64;
        let mesh = TimeMesh::uniform(1.0, 12)?;
        let ctx = CQContext::new(&mesh, beta)?;
        for n in 0..12 {
            for j in 0..=n {
                let q = ctx.cq_weight(n, j)?;
                let d = ctx.cq_weight_divdiff(n, j)?;
                let u = cq_weights_uniform(mesh.step(0), n - j, beta);
                worst_uniform = worst_uniform.max(((q - u) / u).abs()).max(((d - u) / u).abs());
            }
        }
        out.push(check(&format!("cq weight routes, uniform, beta {beta}"), worst_uniform, 1e-8));

        let graded = TimeMesh::graded(1.0, 12, 2.0)?;
        let ctx = CQContext::new(&graded, beta)?;
        let mut worst = 0.0f64;
        for n in 0..12 {
            for j in 0..=n {
                let q = ctx.cq_weight(n, j)?;
                let d = ctx.cq_weight_divdiff(n, j)?;
                worst = worst.max(((q - d) / d).abs());
            }
        }
        out.push(check(&format!("cq weight routes, graded, beta {beta}"), worst, 1e-8));
        let data: Vec<f64> = (0..=12).map(|i| (1.3 * i as f64).sin() + 0.1 * i as f64).collect();
        out.push(check(&format!("composition rule, graded, beta {beta}"), ctx.compose_check(11, &data)?, 1e-8));
    }
    if let SpaceOperator::Fem(fem) = SpaceOperator::fem(64)? {
        out.push(check("fem smallest eigenvalue", (fem.smallest_eigenvalue()? - 1.0).abs(), 1e-6));
    }
    let op = SpaceOperator::fem(64)?;
    let norm = op.norm(&op.l2_project(f64::sin)?)?;
    out.push(check("fem projected sine norm", (norm - (PI / 2.0).sqrt()).abs(), 1e-6));
    Ok(out)
}
