use thiserror::Error;

/// Errors produced by the design, traffic, objective, and search layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid move: {0}")]
    InvalidMove(String),

    #[error("infeasible move: {0}")]
    InfeasibleMove(String),

    #[error("routing error: tile {dst} unreachable from tile {src}")]
    Unreachable { src: usize, dst: usize },

    #[error("traffic spec error: {0}")]
    TrafficSpec(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("context error: {0}")]
    Context(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("reference point error: {0}")]
    ReferencePoint(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
