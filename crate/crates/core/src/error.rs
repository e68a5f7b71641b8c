use thiserror::Error;

/// Errors raised by the model, sampler and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("location {0:?} lies outside the domain")]
    OutOfDomain(Vec<f64>),

    #[error("node (j={j}, r=1) has no father")]
    NoFather { j: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("hyperparameter error: {0}")]
    Hyperparameter(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
