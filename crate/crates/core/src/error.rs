use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("not a quantum channel: {0}")]
    NotAChannel(String),

    #[error("numerical consistency error: {0}")]
    Numerical(String),

    #[error("data quality error: {0}")]
    DataQuality(String),

    #[error("retraction failed: {0}")]
    Retraction(String),

    #[error("linear algebra backend: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim_mismatch(what: &str, expected: usize, got: usize) -> Self {
        Error::Dimension(format!("{what}: expected dimension {expected}, got {got}"))
    }
}
