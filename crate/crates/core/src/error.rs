use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric (|M[{row}][{col}] - M[{col}][{row}]| too large)")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("active-set Gram matrix is numerically singular (|A| = {size})")]
    SingularActiveGram { size: usize },

    #[error("design column {column} does not have Euclidean norm sqrt(n) (norm {norm})")]
    NotNormalized { column: usize, norm: f64 },

    #[error("column {0} is degenerate (sample second moment below the variance floor)")]
    DegenerateColumn(usize),

    #[error("fitted residual variance is not positive ({0:e})")]
    NonPositiveVariance(f64),

    #[error("index {index} is not in the active set")]
    IndexNotInActiveSet { index: usize },

    #[error("all candidate support sizes failed for column {column}")]
    AllCandidatesFailed { column: usize },

    #[error("p-value {0} is outside [0, 1]")]
    InvalidPValue(f64),

    #[error("groups of size {group_size} do not evenly partition p = {p}")]
    IndivisibleGroups { p: usize, group_size: usize },

    #[error("at least {required} replications are required, got {got}")]
    InsufficientReplications { required: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::SingularActiveGram { .. }
                | Error::NonPositiveVariance(_)
                | Error::AllCandidatesFailed { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
