use thiserror::Error;

/// Errors surfaced by the benchmark library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("training diverged at epoch {epoch}")]
    DivergedTraining { epoch: usize },
    #[error("cannot draw {requested} distinct architectures from a space of {available}")]
    DuplicateExhaustion { requested: usize, available: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("budget exceeded: requested {requested}, remaining {remaining}")]
    BudgetExceeded { requested: f64, remaining: f64 },
    #[error("protocol failure: {0}")]
    ProtocolFailure(String),
    #[error("degenerate benchmark: {0}")]
    DegenerateBenchmark(String),
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
