//! Low-rank matrix estimation in the trace regression model.
//!
//! Observations follow `Y_i = trace(X_iᵀ A*) + ξ_i`. The crate provides the
//! Schatten-p penalized least squares estimator, the sampling-operator
//! diagnostics its guarantees depend on, calibration of the regularization
//! weight from effective noise levels, seeded Monte Carlo studies and the
//! packing constructions behind the minimax lower bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod cli;
pub mod datagen;
pub mod densela;
pub mod error;
pub mod experiments;
pub mod lowerbound;
pub mod metrics;
pub mod prox;
pub mod rng;
pub mod sampling;
pub mod solver;

pub use densela::{Matrix, SvdFactors};
pub use error::{Error, Result};
