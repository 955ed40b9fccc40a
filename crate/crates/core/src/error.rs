use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent user input (configs, descriptors, point files).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// A structural check failed (Hermiticity of an assembled block, unitarity of
    /// an irrep). Indicates a broken quadrature or irrep evaluator.
    #[error("numerical integrity failure: {0}")]
    Integrity(String),

    /// The block spectrum and the dense oracle disagree.
    #[error("validation mismatch: {0}")]
    Mismatch(String),

    /// Runtime numerical failure (eigensolver non-convergence, kernel underflow).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Io { .. } | Error::Json { .. } => 2,
            Error::Integrity(_) => 3,
            Error::Mismatch(_) => 4,
            Error::Numerical(_) => 5,
        }
    }
}
