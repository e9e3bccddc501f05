use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient history: need {needed} samples, have {available}")]
    InsufficientHistory { needed: usize, available: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("target ({x:.6}, {y:.6}) is out of reach")]
    Unreachable { x: f64, y: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate frame: {0}")]
    DegenerateFrame(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("missing baseline for {0}")]
    MissingBaseline(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed input in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
