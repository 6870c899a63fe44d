use thiserror::Error;

/// Errors raised across the library.
///
/// Variants split into two families: input validation (a caller passed
/// something outside an operation's domain) and numerical failure (a solver,
/// quadrature or root search did not meet its contract). The CLI maps the two
/// families onto distinct exit codes via [`PamError::is_validation`].
#[derive(Debug, Error)]
pub enum PamError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value {value} at t = {t}")]
    NonFinite { t: f64, value: f64 },

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("no sign change found while scanning [{lo:e}, {hi:e}] ({trace})")]
    NoBracket { lo: f64, hi: f64, trace: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { what: &'static str, iterations: usize, residual: f64 },

    #[error("auxiliary function kappa is non-positive ({value:e}) at t = {t}")]
    NonPositiveKappa { t: f64, value: f64 },

    #[error("dense path limited to {limit} sites, box has {sites}")]
    DenseLimit { sites: usize, limit: usize },

    #[error("truncation margin too small: boundary mass {mass:e} exceeds {threshold:e}")]
    MarginTooSmall { mass: f64, threshold: f64 },

    #[error("experiment {experiment} refused for this model: {reason}")]
    Refused { experiment: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PamError {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, PamError::InvalidInput(_) | PamError::Refused { .. } | PamError::Json(_))
    }

    pub fn is_io(&self) -> bool {
        matches!(self, PamError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, PamError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PamError::InvalidInput(msg.into()))
}
