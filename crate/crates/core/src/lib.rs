//! Sparse Gaussian graphical models from data with additive measurement error.
//!
//! The estimator alternates two steps: draw the latent clean data from their
//! Gaussian full conditional given the current precision matrix, then refit a
//! spike-and-slab Lasso MAP estimate (BAGUS) on the imputed data. Post-burn-in
//! estimates are averaged.
//!
//! Module map:
//! - [`linalg`], [`model`]: dense symmetric matrices and shared domain types
//! - [`bagus`]: EM for the spike-and-slab Lasso prior, BIC and tuning
//! - [`iro`]: the imputation/regularization loop
//! - [`simgen`]: synthetic graphs, samples and contamination; experiment cells
//! - [`metrics`]: selection and estimation metrics
//! - [`ingest`]: standardization, error-variance estimation and filters for
//!   expression tables
//! - [`io`]: CSV readers and writers
//! - [`cli`]: the `precis` command-line tool

pub mod bagus;
pub mod cli;
pub mod ingest;
pub mod io;
pub mod iro;
pub mod metrics;
pub mod simgen;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rng;

pub use error::{PrecisError, Result};
pub use linalg::{Cholesky, SymMatrix};
pub use model::{Adjacency, BagusHyperparams, Dataset, MeasurementErrorModel, PrecisionEstimate};
