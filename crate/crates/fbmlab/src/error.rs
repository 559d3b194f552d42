//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbmLabError {
    /// A caller passed an argument outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A parameter window of a construction is violated. The message names
    /// the violated inequality so configuration errors are actionable.
    #[error("invalid configuration: {0}")]
    Configuration(String),

    /// Gaussian generation failed: the (regularized) covariance matrix is
    /// numerically non-positive-definite. Carries the index of the offending
    /// leading minor.
    #[error("covariance matrix not positive definite at leading minor {minor}")]
    Generation { minor: usize },

    /// A norm or derivative exceeded the overflow guard; the integrand is
    /// treated as non-integrable rather than returning infinities.
    #[error("integrability failure: {quantity} = {value:.3e} exceeds guard {guard:.1e}")]
    Integrability {
        quantity: &'static str,
        value: f64,
        guard: f64,
    },

    /// I/O error surfaced by report writers.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FbmLabError>;

impl FbmLabError {
    pub fn argument(msg: impl Into<String>) -> Self {
        FbmLabError::Argument(msg.into())
    }

    pub fn configuration(msg: impl Into<String>) -> Self {
        FbmLabError::Configuration(msg.into())
    }
}
