//! Matrix-free solver laboratory for the state formulation of incremental
//! weak-constraint 4D-Var with randomised low-rank preconditioning.
//!
//! The pieces, bottom up:
//!
//! - [`lorenz96`]: the model, its RK4 step, and the exact tangent-linear and
//!   adjoint of that step.
//! - [`covariance`]: SOAR and Laplacian correlations and the covariance
//!   operators `B`, `Q`.
//! - [`operators`]: the space-time block operators `L`, `L⁻¹`, `H`, `D`, `P`,
//!   `W`, the Hessian and the cost functions.
//! - [`rsvd`]: randomised SVD of a matrix-free operator.
//! - [`precond`]: the change-of-variable preconditioners.
//! - [`pcg`]: conjugate gradients with per-iteration cost tracing.
//! - [`experiments`]: identical-twin experiments on Lorenz 96.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod error;
pub mod experiments;

pub mod io;
pub mod lorenz96;
pub mod operators;
mod parallel;
pub mod pcg;
pub mod precond;
pub mod rsvd;

pub use error::{Error, Result};
