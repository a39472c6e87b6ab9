use std::path::PathBuf;

use mqm_reanno_core::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },
    #[error("{origin}:{line}: duplicate annotation key {key}")]
    DuplicateKey {
        origin: String,
        line: usize,
        key: String,
    },
    #[error("{origin}:{line}: invalid annotation: {}", codes(.violations))]
    Invalid {
        origin: String,
        line: usize,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Core(#[from] mqm_reanno_core::Error),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Service(#[from] crate::service::ServiceError),
    #[error("{0}")]
    Config(String),
}

fn codes(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{} ({})", v.code(), v.field()))
        .collect::<Vec<_>>()
        .join(", ")
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Line number for errors tied to one input line.
    pub fn line(&self) -> Option<usize> {
        match self {
            Error::Parse { line, .. }
            | Error::DuplicateKey { line, .. }
            | Error::Invalid { line, .. } => Some(*line),
            _ => None,
        }
    }
}
