use thiserror::Error;

/// Errors raised by the catalogs, the solver and the particle oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("quadrature failed to converge on [{lo}, {hi}] (estimate {estimate}, error {error})")]
    Quadrature {
        lo: f64,
        hi: f64,
        estimate: f64,
        error: f64,
    },

    #[error("step size underflow at t = {t}: dt = {dt} fell below dt_min = {dt_min}")]
    Stiffness { t: f64, dt: f64, dt_min: f64 },

    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be a positive finite number, got {value}")))
    }
}
