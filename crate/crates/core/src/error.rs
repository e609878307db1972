use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside its admissible domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A density matrix carries off-X entries above the extraction threshold.
    #[error("not an X-state: entry ({row}, {col}) has magnitude {magnitude:e}")]
    NotXState { row: usize, col: usize, magnitude: f64 },

    /// Line-oriented inequality text could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The scenario (parties, inputs, outputs) is not supported.
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    /// A coincidence-count file is malformed.
    #[error("load error at row {row}: {message}")]
    Load { row: usize, message: String },

    /// Datasets that must share settings do not.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Records do not form a complete setting block.
    #[error("incomplete block: {0}")]
    IncompleteBlock(String),

    /// Least-squares fitting failed.
    #[error("fit error: {0}")]
    Fit(String),

    /// Parameter estimation from a curve failed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Required data (inequality files, inputs) were not found.
    #[error("missing data: {}", .0.display())]
    MissingData(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
