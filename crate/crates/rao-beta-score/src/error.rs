//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Typed failures; numerical problems never surface as silent NaNs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Structural defect in an input matrix or vector.
    #[error("structural error: {0}")]
    Structure(String),

    /// A parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Cholesky factorization failed: the matrix is not positive definite.
    #[error("factorization error: {0}")]
    Factorization(String),

    /// The weighted fit degenerated (all mass down-weighted, zero variance,
    /// or a vanishing denominator); usually signals β too large for the
    /// sample or degenerate data.
    #[error("degeneracy error: {0}")]
    Degeneracy(String),

    /// A fixed-point solver exhausted its iteration budget. The trace holds
    /// the residual after each outer iteration.
    #[error(
        "estimator did not converge after {iterations} iterations \
         (last residual {residual:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<f64>,
    },

    /// A sample correlation matrix is rank deficient; its determinant is
    /// null, which invalidates determinant-based statistics.
    #[error("rank error: {0}")]
    Rank(String),

    /// A converged estimate violates a validity constraint of the test.
    #[error("validity error: {0}")]
    Validity(String),

    /// Malformed input data (parsing, shape, emptiness).
    #[error("data error: {0}")]
    Data(String),
}
