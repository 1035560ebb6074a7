use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what} {id} out of range (expected < {len})")]
    OutOfRange {
        what: &'static str,
        id: usize,
        len: usize,
    },

    #[error("zero-norm row {row} in {kind} embeddings")]
    ZeroNorm { kind: String, row: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("{what}: expected {expected}, found {found}")]
    Alignment {
        what: String,
        expected: String,
        found: String,
    },

    #[error("action filter called on a row without interaction (theta = {theta})")]
    NotInteracting { theta: f64 },
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn alignment(
        what: impl Into<String>,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        Error::Alignment {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Process exit code for the command-line driver:
    /// 2 unreadable input, 3 validation failure, 4 alignment or format mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Json { .. }
            | Error::Validation(_)
            | Error::OutOfRange { .. }
            | Error::ZeroNorm { .. }
            | Error::NotInteracting { .. } => 3,
            Error::Format(_) | Error::Alignment { .. } => 4,
        }
    }
}
