use thiserror::Error;

/// Errors produced by the filters, generators and the experiment runner.
#[derive(Debug, Error)]
pub enum FlafError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("filter diverged: {0}")]
    Divergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned matrix: {0}")]
    IllConditioned(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FlafError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(FlafError::SizeMismatch { expected, got })
    }
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(FlafError::InvalidInput(format!(
            "{what}: non-finite sample at index {i}"
        ))),
    }
}
