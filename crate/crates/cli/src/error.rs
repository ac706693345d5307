use crate::config::Origin;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse {text:?} on line {line}: expected key=value")]
    Syntax { line: usize, text: String },

    #[error("duplicate key {key}: first set on line {first}, again on line {second}")]
    Duplicate {
        key: String,
        first: usize,
        second: usize,
    },

    #[error("unknown key {key} ({origin})")]
    UnknownKey { key: String, origin: Origin },

    #[error("missing required key {key}")]
    Missing { key: String },

    #[error("key {key} ({origin}): expected {expected}, got {value:?}")]
    Type {
        key: String,
        expected: String,
        value: String,
        origin: Origin,
    },

    #[error("key {key} ({origin}): {message}")]
    Domain {
        key: String,
        origin: Origin,
        message: String,
    },

    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: kraichnan_core::Error,
    },

    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),

    #[error("serializing outputs: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T, RunError>;
}

impl<T> Context<T> for kraichnan_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T, RunError> {
        self.map_err(|source| RunError::Core {
            context: what.into(),
            source,
        })
    }
}
