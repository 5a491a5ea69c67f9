use thiserror::Error;

/// Errors produced by the analysis, optimization and reliability layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("structurally singular stiffness matrix (zero pivot at reduced dof {dof})")]
    StructuralSingularity { dof: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {what} of length {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("ill-posed least-squares fit: columns {columns:?} are linearly dependent")]
    IllPosedFit { columns: Vec<usize> },

    #[error("eigen decomposition failed to converge")]
    EigenNonConvergence,

    #[error("inconsistent state: {0}")]
    Inconsistent(String),

    #[error("{invalid} of {total} Monte Carlo samples failed (limit {limit})")]
    TooManyInvalidSamples {
        invalid: usize,
        total: usize,
        limit: usize,
    },

    #[error("reports are not comparable: {0}")]
    Incomparable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
