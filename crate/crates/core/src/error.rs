//! Error type shared by the simulator modules.

use crate::dsl::DslError;

/// Result alias used throughout the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),

    #[error("levels {a}-{b} do not form a {channel} transition")]
    InvalidTransition { a: u8, b: u8, channel: String },

    #[error("invalid pulse: {0}")]
    InvalidPulse(String),

    #[error("negative duration {0} s")]
    NegativeDuration(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid ensemble specification: {0}")]
    InvalidEnsemble(String),

    #[error("timing conflict: {0}")]
    Timing(String),

    #[error("integration window: {0}")]
    Window(String),

    #[error("fit failed: {message} (residual norm {residual})")]
    Fit { message: String, residual: f64 },

    #[error("tomography: {0}")]
    Tomography(String),

    #[error(transparent)]
    Dsl(#[from] DslError),
}
