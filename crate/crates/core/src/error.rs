use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("degenerate expansion point for stream(s) {0:?}")]
    Degenerate(Vec<crate::model::Stream>),

    #[error("invalid experiment plan: {0}")]
    Plan(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
