//! Mark-and-bisect refinement driven by the `L^∞` estimator.
//!
//! Each pass solves from scratch on the current mesh, evaluates `E²_est` at
//! every node, marks the intervals `I_n` with
//! `E²_est(t_{n+1}) ≥ θ · max_j E²_est(t_j)` and halves them.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::estimator::{EstimateSeries, Estimator, EstimatorConfig};
use crate::mesh::TimeMesh;
use crate::stepper::{solve, Problem, Scheme, Trajectory};

/// Estimates below this multiple of `max_n ‖U_n‖` count as zero.
pub const ROUNDOFF_FLOOR: f64 = 1e4 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub theta_mark: f64,
    /// Stop once a solved mesh has at least this many intervals.
    pub max_intervals: usize,
    /// Stop once `max_j E²_est(t_j)` falls to this value.
    pub target: Option<f64>,
    pub initial_mesh: TimeMesh,
}

impl AdaptiveConfig {
    pub const DEFAULT_THETA: f64 = 0.75;
    pub const DEFAULT_INITIAL_INTERVALS: usize = 8;

    pub fn new(horizon: f64, max_intervals: usize) -> Result<Self> {
        Ok(Self {
            theta_mark: Self::DEFAULT_THETA,
            max_intervals,
            target: None,
            initial_mesh: TimeMesh::uniform(horizon, Self::DEFAULT_INITIAL_INTERVALS)?,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta_mark > 0.0 && self.theta_mark < 1.0) {
            return Err(Error::InvalidParameter(format!("marking fraction {} not in (0, 1)", self.theta_mark)));
        }
        if self.max_intervals <= self.initial_mesh.intervals() {
            return Err(Error::InvalidParameter(format!(
                "budget {} does not exceed the initial {} intervals",
                self.max_intervals,
                self.initial_mesh.intervals()
            )));
        }
        if let Some(t) = self.target {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter(format!("target {t} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Budget,
    Target,
    NothingMarked,
}

#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    pub trajectory: Trajectory,
    pub series: EstimateSeries,
    /// `max_j E²(t_j)`, when the problem has a reference.
    pub e_max: Option<f64>,
    /// `max_j E²_est(t_j)`.
    pub e_max_est: f64,
    pub marked: BTreeSet<usize>,
}

impl AdaptiveStep {
    pub fn mesh(&self) -> &TimeMesh {
        self.trajectory.mesh()
    }

    pub fn intervals(&self) -> usize {
        self.mesh().intervals()
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveTrace {
    pub steps: Vec<AdaptiveStep>,
    pub stop: StopReason,
}

impl AdaptiveTrace {
    pub fn last(&self) -> &AdaptiveStep {
        self.steps.last().expect("at least one pass")
    }

    /// Columns `iteration, N, e_max, e_max_est`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,N,e_max,e_max_est\n");
        for (i, s) in self.steps.iter().enumerate() {
            let e = s.e_max.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{i},{},{e},{}", s.intervals(), s.e_max_est);
        }
        out
    }
}

/// Indices `n` with `estimates[n] ≥ θ · max estimates`, where `estimates[n]`
/// belongs to the right end of interval `n`. Empty when every estimate is 0.
pub fn mark_values(estimates: &[f64], theta_mark: f64) -> BTreeSet<usize> {
    let top = estimates.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return BTreeSet::new();
    }
    let threshold = theta_mark * top;
    estimates.iter().enumerate().filter(|(_, &e)| e >= threshold).map(|(n, _)| n).collect()
}

pub fn mark(series: &EstimateSeries, theta_mark: f64) -> BTreeSet<usize> {
    mark_values(&series.e2_est[1..], theta_mark)
}

pub fn adapt(
    problem: &Problem,
    scheme: Scheme,
    cfg: &AdaptiveConfig,
    est_cfg: EstimatorConfig,
) -> Result<AdaptiveTrace> {
    cfg.validate()?;
    let mut mesh = cfg.initial_mesh.clone();
    let mut steps = Vec::new();
    loop {
        let trajectory = solve(problem, &mesh, scheme)?;
        let series = Estimator::new(&trajectory, problem, est_cfg)?.series()?;
        let e_max_est = series.e2_est[1..].iter().copied().fold(0.0, f64::max);
        let e_max = series.e2.as_ref().map(|e| e[1..].iter().copied().fold(0.0, f64::max));
        // estimates at the rounding level of the solution carry no information
        let op = problem.operator();
        let mut scale = 0.0f64;
        for u in trajectory.values() {
            scale = scale.max(op.norm(u)?);
        }
        let marked = if e_max_est <= ROUNDOFF_FLOOR * scale {
            BTreeSet::new()
        } else {
            mark(&series, cfg.theta_mark)
        };
        let stop = if mesh.intervals() >= cfg.max_intervals {
            Some(StopReason::Budget)
        } else if cfg.target.is_some_and(|t| e_max_est <= t) {
            Some(StopReason::Target)
        } else if marked.is_empty() {
            Some(StopReason::NothingMarked)
        } else {
            None
        };
        let next = if stop.is_none() { Some(mesh.bisect(&marked)?) } else { None };
        steps.push(AdaptiveStep { trajectory, series, e_max, e_max_est, marked });
        match (stop, next) {
            (Some(stop), _) => return Ok(AdaptiveTrace { steps, stop }),
            (None, Some(m)) => mesh = m,
            (None, None) => unreachable!("a mesh is refined whenever the loop continues"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{HElem, SpaceOperator};
    use std::sync::Arc;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn mark_examples() {
        assert_eq!(mark_values(&[1.0, 2.0, 4.0, 3.0], 0.75), set(&[2, 3]));
        assert_eq!(mark_values(&[5.0], 0.75), set(&[0]));
        assert_eq!(mark_values(&[2.0; 5], 0.99), set(&[0, 1, 2, 3, 4]));
        assert!(mark_values(&[0.0, 0.0], 0.5).is_empty());
    }

    #[test]
    fn steady_state_stops_at_once() {
        let c = 0.8;
        let p = Problem::new(
            SpaceOperator::scalar(2.0).unwrap(),
            0.5,
            Arc::new(move |_| HElem::scalar(2.0 * c)),
            HElem::scalar(c),
        )
        .unwrap();
        let cfg = AdaptiveConfig::new(1.0, 64).unwrap();
        let trace = adapt(&p, Scheme::L1, &cfg, EstimatorConfig::default()).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.stop, StopReason::NothingMarked);
        assert!(trace.last().marked.is_empty());
    }

    #[test]
    fn refinement_nests_and_grows() {
        let p = Problem::new(
            SpaceOperator::scalar(1.0).unwrap(),
            0.4,
            Arc::new(|t: f64| HElem::scalar(if t > 0.3 { 2.0 } else { 1.0 })),
            HElem::scalar(0.0),
        )
        .unwrap();
        let cfg = AdaptiveConfig::new(1.0, 60).unwrap();
        let trace = adapt(&p, Scheme::Cq, &cfg, EstimatorConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::Budget);
        for w in trace.steps.windows(2) {
            assert!(w[1].intervals() > w[0].intervals());
            assert_eq!(w[1].intervals(), w[0].intervals() + w[0].marked.len());
            for t in w[0].mesh().nodes() {
                assert!(w[1].mesh().nodes().contains(t));
            }
        }
        assert!(trace.last().intervals() >= 60);
    }

    #[test]
    fn target_stops_early() {
        let p = Problem::new(
            SpaceOperator::scalar(1.0).unwrap(),
            0.5,
            Arc::new(|_| HElem::scalar(1.0)),
            HElem::scalar(0.0),
        )
        .unwrap();
        let mut cfg = AdaptiveConfig::new(1.0, 10_000).unwrap();
        cfg.target = Some(1e9);
        let trace = adapt(&p, Scheme::L1, &cfg, EstimatorConfig::default()).unwrap();
        assert_eq!(trace.stop, StopReason::Target);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.to_csv().lines().count(), 2);
    }

    #[test]
    fn rejects_bad_config() {
        let p = Problem::new(SpaceOperator::scalar(1.0).unwrap(), 0.5, Arc::new(|_| HElem::scalar(0.0)), HElem::scalar(1.0))
            .unwrap();
        let mut cfg = AdaptiveConfig::new(1.0, 8).unwrap();
        assert!(adapt(&p, Scheme::L1, &cfg, EstimatorConfig::default()).is_err());
        cfg.max_intervals = 20;
        cfg.theta_mark = 1.0;
        assert!(adapt(&p, Scheme::L1, &cfg, EstimatorConfig::default()).is_err());
    }
}
