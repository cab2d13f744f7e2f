use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures talking to an external scorer or translator.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    /// Connection refused, timeout, reset. Retried by the HTTP clients.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("service returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    /// The call was rejected before anything was sent.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("matrix format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: String,
        #[source]
        source: Box<Error>,
    },
    #[error("question {q_id}: {source}")]
    Run {
        q_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure came from a scorer or translator rather than from input data.
    pub fn is_service(&self) -> bool {
        match self {
            Error::Service(_) => true,
            Error::Candidate { source, .. } | Error::Run { source, .. } => source.is_service(),
            _ => false,
        }
    }
}
