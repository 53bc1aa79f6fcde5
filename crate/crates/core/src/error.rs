use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral parameter must lie in the upper half plane (Im z = {0})")]
    OffUpperHalfPlane(f64),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max defect {0:.3e})")]
    NotHermitian(f64),

    #[error("eigensolver failed to converge")]
    Eigensolver,

    #[error("retraction failed: {0}")]
    Retraction(String),

    #[error("eigenvalue collision near index {index} after {halvings} step halvings (gap {gap:.3e})")]
    Collision {
        index: usize,
        halvings: u32,
        gap: f64,
    },

    #[error("{what} did not converge (residual {residual:.3e})")]
    NoConvergence { what: &'static str, residual: f64 },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::InvalidArgument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
