use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GasketError {
    #[error("invalid symbol {0}: symbols are 1, 2 or 3")]
    InvalidSymbol(u8),

    #[error("word depth {depth} exceeds the depth guard {max}")]
    DepthGuard { depth: usize, max: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("S_theta is empty for theta = {theta}; largest admissible theta is about {theta0}")]
    EmptySTheta { theta: f64, theta0: f64 },

    #[error("gradient of field `{name}` disagrees with finite differences by {discrepancy:e} at {point}")]
    InconsistentGradient {
        name: String,
        discrepancy: f64,
        point: crate::linalg::Vec2,
    },

    #[error("invalid configuration `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl GasketError {
    pub fn domain(msg: impl Into<String>) -> Self {
        GasketError::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        GasketError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, GasketError>;
