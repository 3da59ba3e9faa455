//! Deep nonparametric regression for repeated measurements under covariate
//! shift.
//!
//! The crate provides:
//!
//! - [`nn`] — from-scratch dense ReLU networks with reverse-mode gradients,
//!   Adam and Nesterov-momentum SGD, early stopping, and the structural
//!   statistics (width, depth, size, weight bound) of the function class;
//! - [`density_ratio`] — least-squares density-ratio estimation from source
//!   and target covariates, truncated variants, and the exact Gaussian-copula
//!   ratio;
//! - [`regression`] — the three target-regression estimators (URE with an
//!   estimated ratio and subject-level sample splitting, KRE with a known
//!   ratio, and the naive unweighted fit);
//! - [`simplex`] — Freudenthal triangulation of `[0,1]^d`, the barycentric
//!   partition of unity, local Taylor polynomials, and the explicit error
//!   certificate with polynomial-in-dimension constants;
//! - [`simgen`] — seedable generators for the two simulation designs
//!   (Gaussian-copula covariate shift, subject random-effect series);
//! - [`dataio`] — panel CSV ingestion, preprocessing, and binned MSE;
//! - [`harness`] — Monte Carlo experiment orchestration and result tables.

pub mod dataio;
pub mod dataset;
pub mod density_ratio;
pub mod error;
pub mod harness;
pub mod nn;
pub mod normal;
pub mod regression;
pub mod rng;
pub mod simgen;
pub mod simplex;

pub use error::{Error, Result};
