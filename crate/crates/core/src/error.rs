use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate document id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("{count} unknown document id(s); first offenders: {first:?}")]
    UnknownIds { count: usize, first: Vec<String> },

    #[error("input contains a single class: {0}")]
    SingleClass(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("experiment state: {0}")]
    State(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{} invalid field(s)", .0.len())]
    Invalid(Vec<crate::orchestrator::annotation::FieldError>),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
