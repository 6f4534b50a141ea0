//! Latent two-compartment stock-flow models fitted to annual completion
//! flows: forward simulation, log-scale least squares with BFGS,
//! curvature-based uncertainty, information-criterion selection over a
//! specification grid, and robustness protocols.

// `!(x > 0.0)` is used deliberately so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod model;

pub use error::{Error, Result};
pub mod diagnostics;
pub mod estimation;
pub mod io;
pub mod selection;
pub mod synthetic;
