use thiserror::Error;

use crate::moments::BlockVector;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("block {block} is singular")]
    SingularBlock { block: String },
    #[error("matrix {what} is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPSD { what: String, min_eig: f64 },
    #[error("wrong tie kind: expected {expected}, got {got}")]
    WrongKind { expected: String, got: String },
    #[error("rotation with cos {cos} is infeasible for d_s = {ds}")]
    InfeasibleRotation { ds: usize, cos: f64 },
    #[error("mixing fraction {0} outside (0, 1]")]
    InvalidMixing(f64),
    #[error("spurious second-moment block is not isotropic (deviation {0:.3e})")]
    NotIsotropic(f64),
    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NotConverged {
        iterations: usize,
        grad_norm: f64,
        last: Box<BlockVector>,
    },
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> LabError {
    LabError::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
