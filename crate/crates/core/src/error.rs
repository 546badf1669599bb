use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: node {node} cannot reach any source")]
    Disconnected { node: usize },

    #[error("constraining relation contains a cycle through node {node}; distances are inconsistent")]
    ConstrainingCycle { node: usize },

    #[error("no connected geometric graph after {attempts} attempts (n = {nodes}, radius = {radius} km); increase the radius")]
    GenerationFailed {
        attempts: u32,
        nodes: usize,
        radius: f64,
    },

    #[error("invalid perturbation model: {0}")]
    InvalidModel(String),

    #[error("schedule violates the update window at round {round}: node {node} idle for more than {delta} rounds")]
    ScheduleWindow {
        round: usize,
        node: usize,
        delta: usize,
    },

    #[error("trace is inconsistent: {0}")]
    Inconsistent(String),

    #[error("invalid initial condition: {0}")]
    InvalidInitial(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
