use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("{0}")]
    Domain(String),

    /// A regime whose total responsibility mass fell below the starvation threshold.
    #[error("regime {regime} is starved (total responsibility {mass:e})")]
    StarvedRegime { regime: usize, mass: f64 },

    #[error("all {restarts} EM restarts were degenerate; last failure: {reason}")]
    AllRestartsDegenerate { restarts: usize, reason: String },

    #[error("fitting class {label} failed: {source}")]
    ClassFit {
        label: i64,
        #[source]
        source: Box<Error>,
    },

    /// Malformed tabular input, with a 1-based location.
    #[error("{}: line {line}, column {column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// A JSON document that does not match the model schema.
    #[error("{}: at `{json_path}`: {message}", path.display())]
    Schema {
        path: PathBuf,
        json_path: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
