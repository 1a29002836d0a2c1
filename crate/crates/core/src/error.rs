use thiserror::Error;

/// Errors produced anywhere in the estimation and testing pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("matrix is singular or ill-conditioned: {0}")]
    SingularMatrix(String),

    #[error("covariance is rank deficient (eigenvalue ratio {ratio:.3e})")]
    RankDeficient { ratio: f64 },

    #[error("every row permutation leaves a zero on the diagonal")]
    DegeneratePermutation,

    #[error("invalid scale plan: {0}")]
    InvalidScalePlan(String),

    #[error("too many failed bootstrap replicates at scale {scale_index}: {effective} of {requested} usable")]
    TooManyFailures {
        scale_index: usize,
        effective: usize,
        requested: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no converged candidate fit")]
    NoConvergedFit,

    #[error("experiment aborted: {failed} of {total} datasets failed")]
    ExperimentAborted { failed: usize, total: usize },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
