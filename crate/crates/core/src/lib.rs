//! Time stepping and a posteriori error control for the time-fractional
//! subdiffusion problem
//!
//! ```text
//! D_t^β u + A u = f,   0 < t ≤ T,   u(0) = u⁰,
//! ```
//!
//! where `D_t^β` is the Caputo derivative of order `β ∈ (0, 1)` and `A` is a
//! positive definite self-adjoint operator.
//!
//! The crate provides
//!
//! - non-uniform time meshes with graded construction and bisection ([`mesh`]),
//! - the L1 discretization of the Caputo derivative ([`l1`]),
//! - backward-Euler convolution quadrature on non-uniform steps, with
//!   independent routes to the weights ([`cq`]),
//! - a scalar operator and a quadratic finite-element Dirichlet Laplacian on
//!   `(0, π)` ([`space`]),
//! - the L1, corrected L1 and CQ time steppers ([`stepper`]),
//! - residual-based error estimators in `L²(0,t;H)` and `L^∞(0,t;H)`
//!   ([`estimator`]),
//! - a mark-and-bisect adaptive loop ([`adaptive`]),
//! - manufactured test problems and study drivers ([`experiments`]).
//!
//! All history sums are evaluated directly, so a run with `N` steps costs
//! `O(N²)` operator applications.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// 2/√π appears as the tabulated value 1/Γ(3/2)
#![cfg_attr(test, allow(clippy::approx_constant, clippy::needless_range_loop))]

pub mod adaptive;
pub mod cq;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod l1;
pub mod mesh;
pub mod quadrature;
pub mod space;
pub mod special;
pub mod stepper;

pub use error::{Error, Result};
pub use mesh::TimeMesh;
pub use space::{HElem, SpaceOperator};
pub use stepper::{Problem, Scheme, Trajectory};
