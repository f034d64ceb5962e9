use thiserror::Error;

/// Errors surfaced by the estimation, testing and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error at row {row}, column {column}: {reason}")]
    Ingestion {
        /// 1-based data row (header excluded); 0 means "not row specific".
        row: usize,
        column: String,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("box {box_index:?} holds {count} observations, need at least 2")]
    InsufficientSubsample {
        box_index: Option<usize>,
        count: usize,
    },

    #[error("box {box_index:?} has empirical probability zero")]
    DegenerateBox { box_index: Option<usize> },

    #[error("contrasted covariance matrix is numerically singular (pivot ratio below {pivot_tol:e})")]
    SingularMatrix { pivot_tol: f64 },

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("observation {row} lies outside every box of the family")]
    Coverage { row: usize },

    #[error("bootstrap replicate {replicate} exhausted {attempts} redraw attempts (undersized box)")]
    RedrawExhausted { replicate: usize, attempts: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
