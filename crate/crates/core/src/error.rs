use thiserror::Error;

/// Errors produced by the stratification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("{0}")]
    Validation(String),

    #[error("bin [{lo}, {hi}] lies outside the histogram range [0, {max_count}]")]
    Range { lo: u64, hi: u64, max_count: u64 },

    #[error("exhaustive enumeration refused: {cells} cells exceeds the limit of {limit}")]
    TooManyCells { cells: usize, limit: usize },

    #[error("ground truth {y} is outside its bin [{lo}, {hi}]")]
    OutsideBin { y: f64, lo: u64, hi: u64 },

    #[error("{0}")]
    Empty(&'static str),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(message: impl Into<String>) -> Error {
    Error::Validation(message.into())
}
