//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quaternion norm {norm} is not unit")]
    NotUnit { norm: f64 },
    #[error("matrix is not a proper rotation (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("gravity and magnetic field directions are collinear")]
    DegenerateInitialization,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier used in the one-line command-line error report.
    pub fn class(&self) -> &'static str {
        match self {
            Error::NotUnit { .. } => "not_unit",
            Error::NotOrthonormal { .. } => "not_orthonormal",
            Error::DegenerateInitialization => "degenerate_initialization",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidInput(_) => "invalid_input",
            Error::LengthMismatch(..) => "length_mismatch",
            Error::Numerical(_) => "numerical",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
