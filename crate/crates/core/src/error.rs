use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A loss or gradient became non-finite; `what` names the offending
    /// parameter or loss component.
    #[error("training diverged: non-finite {what}{}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    Divergence { what: String, epoch: Option<usize> },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn divergence(what: impl Into<String>) -> Self {
        Error::Divergence { what: what.into(), epoch: None }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::Checkpoint(_) | Error::Io { .. } => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
