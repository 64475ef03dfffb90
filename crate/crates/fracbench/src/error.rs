use std::path::PathBuf;

/// Errors from file handling, configuration and the command front end.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("payload of {size} bytes exceeds the {cap}-byte allocation cap")]
    TooLarge { size: u64, cap: u64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] fracbench_core::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 1 for bad input, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Write { .. } | Self::Internal(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn read(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Read { path: path.into(), source }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Write { path: path.into(), source }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Self::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Self::Parse(e.to_string())
    }
}
