use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field index {index} out of range 1..={count}")]
    FieldIndex { index: usize, count: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("point {0:?} coincides with the pole")]
    AtPole(Vec<f64>),

    #[error("pole lies on the domain boundary")]
    PoleOnBoundary,

    #[error("parameter constraint violated: {0}")]
    Parameters(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("non-finite integrand value {value} at node {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("invalid quadrature request: {0}")]
    Quadrature(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
