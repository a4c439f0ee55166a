use std::path::PathBuf;

use crate::model::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value breaks a documented precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("unknown node id `{0}`")]
    UnknownNode(NodeId),

    #[error("route visits node `{0}` which is not active in realization `{1}`")]
    InactiveVisit(NodeId, String),

    #[error("no arc path between `{0}` and `{1}`")]
    MissingPair(NodeId, NodeId),

    #[error("numerical failure in the LP kernel: {0}")]
    Numerical(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported format_version {found} in {path} (expected {expected})")]
    FormatVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
