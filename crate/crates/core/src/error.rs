use std::io;

use thiserror::Error;

/// Errors produced anywhere in the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a divisibility or range constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operand shapes do not agree.
    #[error("shape error: {0}")]
    Shape(String),

    /// A point lies at or behind the camera plane.
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },

    /// A partition spec does not tile the voxel grid, or a sequence tensor is inconsistent.
    #[error("partition error: {0}")]
    Partition(String),

    /// Calibration data failed validation.
    #[error("invalid calibration: {0}")]
    Calibration(String),

    /// The finite-difference oracle saw a non-finite function value.
    #[error("oracle error: {0}")]
    Oracle(String),

    /// A binary file is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A pipeline stage failed.
    #[error("{stage} stage: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
