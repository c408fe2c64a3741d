//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by simulation, training, attack, and defense stages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("empty sample set: {0}")]
    EmptySampleSet(String),

    #[error("model is not trained: {0}")]
    Untrained(String),

    #[error("degenerate feature range at index {0}")]
    DegenerateRange(usize),

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
