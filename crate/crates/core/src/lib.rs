//! High-quantile regression for tail-dependent time series.
//!
//! The crate fits linear quantile regressions at levels close to one, estimates
//! the tail scale and the long-run covariance of exceedance indicators, and
//! tests whether the non-intercept coefficients agree across two quantile
//! levels. Critical values come either from chi-square limits or from a
//! generative calibration that reruns the whole pipeline on iid surrogate
//! responses sharing the observed design.
//!
//! Modules:
//!
//! - [`quantreg`]: check loss, design rescaling and an exact simplex solver.
//! - [`tailstats`]: sparsity and tail scale, indicator correlations, tapered
//!   long-run covariance blocks and the covariance sandwich.
//! - [`homtest`]: the homogeneity statistic and its three calibrations.
//! - [`simgen`]: moving-maximum simulators, trend datasets and closed-form
//!   oracles.
//! - [`harness`]: Monte Carlo coverage and Bahadur-gap experiments.
//! - [`cli`]: data ingestion, the return-series analysis and the `hqreg` binary.

pub mod cli;
pub mod error;
pub mod harness;
pub mod homtest;
pub mod linalg;
pub mod quantreg;
pub mod rng;
pub mod simgen;
pub mod tailstats;

pub use error::{Error, Result};
