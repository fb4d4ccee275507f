use std::path::PathBuf;

/// Errors produced by the clustering library.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("pixels ({0}, {1}) and ({2}, {3}) are not 4-adjacent")]
    NotAdjacent(usize, usize, usize, usize),
    #[error("{what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("image dimensions {actual_rows}x{actual_cols} do not match {rows}x{cols}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        actual_rows: usize,
        actual_cols: usize,
    },
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("label {label} exceeds the {m} local labels")]
    LabelOutOfRange { label: u32, m: usize },
    #[error("{field} value {value} does not fit in 16 bits")]
    LabelOverflow { field: &'static str, value: u32 },
    #[error("malformed file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("degenerate primitive: {0}")]
    DegeneratePrimitive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
