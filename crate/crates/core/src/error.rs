use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch between user {local} and user {remote}: {detail}")]
    Shape {
        local: u32,
        remote: u32,
        detail: String,
    },

    #[error("numeric failure for user {user}: {detail}")]
    Numeric { user: u32, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("pair ({i}, {j}): {source}")]
    Pair {
        i: u32,
        j: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("models are not aggregation-compatible at layer {layer}: {detail}")]
    Incompatible { layer: usize, detail: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged in round {round}: {detail}")]
    Divergence { round: usize, detail: String },

    #[error("round {round}, cluster {cluster}, user {user}: {source}")]
    Training {
        round: usize,
        cluster: usize,
        user: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed {format}: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Self::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
