use thiserror::Error;

pub type Result<T, E = NetinfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NetinfError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("ill-posed quadratic problem: {0}")]
    IllPosed(String),

    #[error("EM failed at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("no grid point converged ({n_rows} rows evaluated)")]
    NoConvergedRows {
        n_rows: usize,
        /// Rendered selection table, kept for diagnosis.
        table_csv: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unknown format '{0}'")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to map errors onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Validation,
    Numerical,
}

impl NetinfError {
    pub fn kind(&self) -> ErrorKind {
        use NetinfError::*;
        match self {
            InvalidArgument(_) | UnknownFormat(_) => ErrorKind::Usage,
            DimensionMismatch(_) | Data(_) | Parse(_) | VersionMismatch { .. } | Io(_) => {
                ErrorKind::Validation
            }
            NonFinite(_) | NotPositiveDefinite(_) | IllPosed(_) | Diverged { .. }
            | NoConvergedRows { .. } => ErrorKind::Numerical,
        }
    }
}

impl From<csv::Error> for NetinfError {
    fn from(e: csv::Error) -> Self {
        NetinfError::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for NetinfError {
    fn from(e: serde_json::Error) -> Self {
        NetinfError::Parse(e.to_string())
    }
}
