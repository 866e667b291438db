use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library. Variants follow the failure classes of the
/// numerical pipeline rather than the module that produced them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Training { epoch: usize, loss: f64 },

    #[error("optimization diverged at iteration {iteration}: {message}")]
    Optimization { iteration: usize, message: String },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Precondition(_) => "precondition",
            Error::Capacity(_) => "capacity",
            Error::Solver(_) => "solver",
            Error::Degenerate(_) => "degenerate",
            Error::Domain(_) => "domain",
            Error::Training { .. } => "training",
            Error::Optimization { .. } => "optimization",
            Error::Format { .. } => "format",
            Error::UnknownStrategy { .. } => "unknown_strategy",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
