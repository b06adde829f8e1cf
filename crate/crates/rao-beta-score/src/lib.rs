//! Rao β-score tests on correlation matrices of p-variate normal data.
//!
//! The crate implements the density-power-divergence (DPD) machinery behind
//! robust Rao-type score tests for correlation structure: half-vectorization
//! calculus, Gaussian scores and information-type matrices, restricted
//! minimum-DPD estimators of means and variances under a correlation null,
//! the four correlation test statistics with their χ² tail probabilities,
//! and a reproducible Monte-Carlo harness for size/power studies.
//!
//! The tuning constant β ≥ 0 trades efficiency for robustness: β = 0
//! recovers the classical score tests built on Pearson correlations, while
//! β > 0 down-weights outlying observations through
//! exp(−β·Mahalanobis²/2) weights.
//!
//! Layout:
//! - [`matrix`] — vech/vecl operators, duplication/elimination/permutation
//!   matrices, the closed-form equicorrelation inverse.
//! - [`gaussian`] — density, scores, DPD weights, J/ξ/K matrices, κ
//!   constants, weighted scatter, and the β-score estimating functions.
//! - [`estimators`] — fixed-point solvers for the restricted fits under
//!   each correlation null.
//! - [`score_tests`] — the test statistics, the quadratic-form oracle, the
//!   Bartlett baseline, and χ² tail probabilities.
//! - [`sim`] — samplers and the Monte-Carlo size/power engine.

pub mod error;
pub mod estimators;
pub mod gaussian;
pub mod matrix;
pub mod sim;

pub(crate) mod linalg;
pub(crate) mod special;

pub use error::{Error, Result};

/// An n×p data matrix: rows are observations, columns are variables.
pub type Sample = ndarray::Array2<f64>;
