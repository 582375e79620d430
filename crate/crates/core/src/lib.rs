//! Penalized linear models with bootstrap variable screening.
//!
//! The crate fits weighted elastic nets by coordinate descent on standardized
//! designs, tunes the penalty by K-fold cross-validation, and implements a
//! two-step estimator: bootstrap percentile intervals decide which predictors
//! are relevant, then a weighted elastic net restricted to those predictors
//! estimates the coefficients. Lasso, elastic net and their adaptive variants
//! are provided as baselines, together with a simulator for correlated,
//! skewed designs and the metrics used to score variable selection.

pub mod error;
pub mod metrics;
pub mod model;
pub mod seeds;
pub mod selection;
pub mod simgen;
pub mod solver;

pub use error::{Error, Result};
pub use model::{standardize, Dataset, FitResult, MethodTag, StandardizedDesign};
