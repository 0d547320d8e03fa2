use thiserror::Error;

use crate::linalg::SymMatrix;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailure,

    #[error("non-finite cross-validation score at lambda = {0:e}")]
    NonFiniteScore(f64),

    #[error("cannot fit mixture: {0}")]
    Mixture(String),

    #[error("block coordinate ascent did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: Vec<SymMatrix>,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
