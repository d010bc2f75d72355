use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("position {x} outside environment domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("stability bound violated: {0}")]
    Stability(String),

    #[error("boundary contamination: {0}")]
    BoundaryContamination(String),

    #[error("quantile level {eps} not resolvable: {reason}")]
    Quantile { eps: f64, reason: String },

    #[error("horizon exhausted: {0}")]
    HorizonExhausted(String),

    #[error("no sign change in bracket [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("truncated replicate {0}: particle cap reached")]
    Truncated(u64),

    #[error("effective sample size {ess:.1} below {min}")]
    EffectiveSampleSize { ess: f64, min: f64 },

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("environment file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
