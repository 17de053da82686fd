use std::path::PathBuf;

use thiserror::Error;

use crate::entities::StructureError;
use crate::etl::EtlError;
use crate::eval::EvalError;
use crate::keyword::SearchError;
use crate::lda::LdaError;
use crate::registry::RegistryError;
use crate::role::RoleError;
use crate::topics::TopicError;

/// Errors surfaced by index loading, persistence and the combined engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("index component missing: {0}")]
    Missing(&'static str),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("index is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Etl(#[from] EtlError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Lda(#[from] LdaError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
