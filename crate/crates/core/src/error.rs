use thiserror::Error;

use crate::field::Space;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected:?}-space field, got {found:?}")]
    WrongSpace { expected: Space, found: Space },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("sample {index} is not finite")]
    NonFinite { index: usize },

    #[error("operation is undefined for the zero field")]
    ZeroField,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid with n = {n} exceeds the limit of {limit} points per axis for this route")]
    GridTooLarge { n: usize, limit: usize },

    #[error("point ({x}, {y}) lies outside the periodic domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("power iteration diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
