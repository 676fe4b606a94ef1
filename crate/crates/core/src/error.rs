use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ingestion error: missing column `{column}` in {file}")]
    MissingColumn { file: String, column: String },

    #[error("ingestion error: frames not strictly increasing in track {track_id} (frame {frame})")]
    NonMonotoneFrames { track_id: i64, frame: i64 },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("agent {agent_id} is off its route: {detail}")]
    OffRoute { agent_id: i64, detail: String },

    #[error("non-finite state for agent {agent_id} at step {step}: {detail}")]
    NonFinite {
        agent_id: i64,
        step: u64,
        detail: String,
    },

    #[error("ego policy `{policy}` produced non-finite output at frame {frame}")]
    PolicyOutput { policy: String, frame: i64 },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
