use thiserror::Error;

use crate::calibration::StatisticKind;

pub type Result<T, E = GsrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GsrError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at coordinate {coordinate}")]
    NonFinite { coordinate: usize },

    #[error("need at least {required} observations, got {found}")]
    TooFewObservations { required: usize, found: usize },

    #[error("window is not warm: {filled} of {capacity} observations")]
    WindowNotWarm { filled: usize, capacity: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "quantile unresolvable for {kind} n={n}: alpha {alpha} with {replications} replications \
         (replications * alpha < 1)"
    )]
    QuantileUnresolvable { kind: StatisticKind, n: usize, alpha: f64, replications: usize },

    #[error("incompatible input: {0}")]
    Incompatible(String),

    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GsrError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        GsrError::InvalidParameter { name, reason: reason.into() }
    }
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(GsrError::invalid(name, format!("{p} is not in (0, 1)")))
    }
}
