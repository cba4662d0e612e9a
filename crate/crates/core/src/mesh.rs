//! Non-uniform time partitions `0 = t_0 < t_1 < … < t_N = T`.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// An ordered partition of `[0, T]`.
///
/// Only the node times are stored; step sizes `κ_n = t_{n+1} - t_n` are
/// derived when asked for.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeMesh {
    nodes: Vec<f64>,
}

impl TimeMesh {
    /// Builds a mesh from explicit nodes, checking `t_0 = 0` and strict growth.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidMesh("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidMesh(format!("first node is {}, not 0", nodes[0])));
        }
        for (n, w) in nodes.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "nodes not strictly increasing at index {}: {} -> {}",
                    n, w[0], w[1]
                )));
            }
        }
        Ok(Self { nodes })
    }

    /// Graded mesh `t_j = T (j/N)^k`; `k = 1` gives the uniform mesh.
    pub fn graded(horizon: f64, intervals: usize, grading: f64) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidMesh("interval count must be positive".into()));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(Error::InvalidMesh(format!("grading exponent {grading} < 1")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidMesh(format!("horizon {horizon} must be positive")));
        }
        let n = intervals as f64;
        let nodes = (0..=intervals)
            .map(|j| {
                if j == intervals {
                    horizon
                } else if grading == 1.0 {
                    horizon * (j as f64 / n)
                } else {
                    horizon * (j as f64 / n).powf(grading)
                }
            })
            .collect();
        Self::from_nodes(nodes)
    }

    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        Self::graded(horizon, intervals, 1.0)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> f64 {
        self.nodes[n]
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("mesh has nodes")
    }

    /// Step size `κ_n = t_{n+1} - t_n`.
    pub fn step(&self, n: usize) -> f64 {
        self.nodes[n + 1] - self.nodes[n]
    }

    pub fn steps(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn max_step(&self) -> f64 {
        self.steps().into_iter().fold(0.0, f64::max)
    }

    pub fn min_step(&self) -> f64 {
        self.steps().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Index `m` with `t ∈ (t_m, t_{m+1}]`; `t = 0` maps to interval 0.
    pub fn interval_containing(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.horizon() {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon() });
        }
        // first node >= t
        let idx = self.nodes.partition_point(|&x| x < t);
        Ok(idx.saturating_sub(1).min(self.intervals() - 1))
    }

    /// Index of the node nearest to `t`, if it lies within `1e-12 T`, shrunk
    /// to a millionth of the adjacent steps so that tiny steps stay distinct.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let idx = self.nodes.partition_point(|&x| x < t);
        let n = match (idx.checked_sub(1), idx < self.nodes.len()) {
            (Some(lo), true) if t - self.nodes[lo] < self.nodes[idx] - t => lo,
            (Some(lo), false) => lo,
            _ => idx,
        };
        let left = n.checked_sub(1).map_or(f64::INFINITY, |m| self.step(m));
        let right = if n < self.intervals() { self.step(n) } else { f64::INFINITY };
        let tol = (1e-12 * self.horizon()).min(1e-6 * left.min(right));
        ((self.nodes[n] - t).abs() <= tol).then_some(n)
    }

    /// Splits every marked interval at its midpoint.
    pub fn bisect(&self, marked: &BTreeSet<usize>) -> Result<Self> {
        let intervals = self.intervals();
        if let Some(&index) = marked.iter().next_back() {
            if index >= intervals {
                return Err(Error::IntervalOutOfRange { index, intervals });
            }
        }
        let mut nodes = Vec::with_capacity(self.nodes.len() + marked.len());
        for n in 0..intervals {
            let t = self.nodes[n];
            nodes.push(t);
            if marked.contains(&n) {
                nodes.push(t + 0.5 * self.step(n));
            }
        }
        nodes.push(self.horizon());
        Self::from_nodes(nodes)
    }

    /// One node time per line.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.nodes.len() * 20);
        for t in &self.nodes {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        let nodes = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<f64>().map_err(|e| Error::Parse(format!("{l:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_nodes(nodes)
    }
}
