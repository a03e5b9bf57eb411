use thiserror::Error;

/// Errors produced by the simulation, regression and scoring layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("nonfinite value in term `{term}` at t = {t}")]
    NumericalDomain { term: &'static str, t: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("solution diverged after t = {t}")]
    Divergence { t: f64 },

    #[error("time {t} outside trajectory span [{t0}, {t1}]")]
    OutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("covariance matrix not positive definite (jitter escalated to {jitter:e})")]
    Conditioning { jitter: f64 },

    #[error("GP fit failed: {0}")]
    Fit(String),

    #[error("period undetectable: {0}")]
    PeriodUndetectable(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
