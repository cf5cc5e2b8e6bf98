use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph `{graph_id}`: {reason}")]
    InvalidGraph { graph_id: String, reason: String },

    #[error("invalid edge set for graph `{graph_id}`: {reason}")]
    InvalidEdgeSet { graph_id: String, reason: String },

    #[error("shape mismatch at {layer}: expected {expected}, got {got}")]
    Shape {
        layer: String,
        expected: String,
        got: String,
    },

    #[error("parse error in graph `{graph_id}`, field `{field}`: {reason}")]
    Parse {
        graph_id: String,
        field: String,
        reason: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stale forward trace: trace has param version {trace}, params are at {params}")]
    StaleTrace { trace: u64, params: u64 },

    #[error("invalid action: edge {edge} is already selected")]
    InvalidAction { edge: usize },

    #[error("no action available: every edge is already selected")]
    NoAction,

    #[error("{what} out of range: {reason}")]
    OutOfRange { what: &'static str, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("refusing exhaustive search over {edges} edges (limit {limit}): C(|E|, K) subsets grow combinatorially")]
    TooManyEdges { edges: usize, limit: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonFinite(_))
    }
}
