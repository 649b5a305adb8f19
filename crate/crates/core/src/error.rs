use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("grid needs at least 3 nodes per side, got {0}")]
    GridTooSmall(usize),

    #[error("coefficient {value} at index {index} is not positive; operator is not coercive")]
    Coercivity { index: usize, value: f64 },

    #[error("system is singular or not positive definite (pivot at row {row})")]
    SingularSystem { row: usize },

    #[error("diagonal entry {value} at row {row} is not positive")]
    NonPositiveDiagonal { row: usize, value: f64 },

    #[error("quasi-CG breakdown: search direction has zero energy norm with nonzero residual")]
    CgBreakdown,

    #[error("control parameter does not match the PDE family {0}")]
    FamilyMismatch(&'static str),

    #[error("control parameter is outside the admissible box")]
    Infeasible,

    #[error("reference value has zero norm")]
    ZeroReference,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
