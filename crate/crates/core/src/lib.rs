//! Sparse regression under Poisson-Gauss noise: LASSO with data-dependent
//! regularization, a debiased estimator with explicit bias removal, and
//! per-coordinate confidence intervals.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod debias;
pub mod error;
pub mod experiment;
pub mod inference;
pub mod lasso;
pub mod matrix;
pub mod poisson;
pub mod rng;
pub mod scalar_est;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
