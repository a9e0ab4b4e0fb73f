use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: missing required column `{column}`")]
    MissingColumn { context: String, column: String },

    #[error("{context}: {message}")]
    Schema { context: String, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("unknown station ids: {}", join_ids(.0))]
    UnknownStations(Vec<i64>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("network has no edge weight")]
    EmptyNetwork,

    #[error("power iteration did not converge after {iterations} iterations (L1 residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("node {0} has positive flow but no module")]
    UncoveredNode(usize),

    #[error("invalid module id {0}")]
    InvalidModule(u32),

    #[error("partitions cover different node universes ({0} vs {1} nodes)")]
    UniverseMismatch(usize, usize),

    #[error("reconciliation failed: {0}")]
    Reconciliation(String),

    #[error("{0}")]
    Serialize(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for usage, schema
    /// and missing-input errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            Error::MissingColumn { .. }
            | Error::Schema { .. }
            | Error::Csv(_)
            | Error::UnknownStations(_)
            | Error::InvalidArgument(_) => 2,
            _ => 1,
        }
    }
}

fn join_ids(ids: &[i64]) -> String {
    ids.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
