use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

/// Invalid or unreadable configuration. `line` is 1-based when known.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub key: String,
    pub message: String,
    pub line: Option<usize>,
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
            line: None,
        }
    }

    pub fn at_line(mut self, line: Option<usize>) -> Self {
        self.line = line;
        self
    }
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing artifact {0}")]
    Missing(PathBuf),
    #[error("{path}: row {row}: {message}")]
    Malformed {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl ArtifactError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArtifactError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion envelope: {0}")]
    Envelope(String),
    #[error("could not parse an opinion after {attempts} attempts: {last_reply:?}")]
    ParseExhausted { attempts: u32, last_reply: String },
    #[error("prompt template `{template}` has unresolved placeholder {{{placeholder}}}")]
    Template {
        template: String,
        placeholder: String,
    },
}

/// Day-pipeline contract violations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent {agent}: `{operation}` called during phase {phase:?}")]
    OutOfOrder {
        agent: u32,
        operation: &'static str,
        phase: crate::agent::DayPhase,
    },
    #[error("belief history is empty")]
    EmptyHistory,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("non-finite state at t = {time}")]
pub struct IntegrationError {
    pub time: f64,
}
