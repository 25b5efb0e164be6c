use crate::invariants::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid experiment or model configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A caller broke an operation's precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Bad input data (empty point cloud, too few samples, ...).
    #[error("input error: {0}")]
    Input(String),

    /// The consensus lower bound needs `epsilon > radius`.
    #[error("lower bound inapplicable: epsilon {epsilon} does not exceed radius {radius}")]
    BoundInapplicable { epsilon: f64, radius: f64 },

    #[error("invariant violated: {0}")]
    Invariant(Box<Violation>),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Configuration-class errors: these map to the CLI's config exit code.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::DimensionMismatch { .. } | Error::Input(_) | Error::Json(_)
        )
    }
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        Error::Invariant(Box::new(v))
    }
}
