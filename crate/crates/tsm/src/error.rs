//! Error taxonomy for the noise-budget engine.
//!
//! Every fallible operation in the crate returns [`Result`]. The variants
//! distinguish contract violations (dimension mismatches, invalid parameters)
//! from genuine numerical trouble (singular systems, PSD violations) so that
//! callers—and the CLI's single-line diagnostics—can report precisely what
//! went wrong.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A quantity that diverges at zero sideband frequency was requested at DC.
    #[error("{quantity} is singular at zero sideband frequency; evaluate at omega > 0 or use the documented DC limit")]
    DcSingular { quantity: &'static str },

    /// Sideband frequency must be a positive, finite angular frequency.
    #[error("sideband frequency must be positive and finite, got {0} rad/s")]
    InvalidFrequency(f64),

    /// A power-loss fraction left the physical range.
    #[error("loss fraction `{name}` must lie in [0, 1), got {value}")]
    InvalidLoss { name: &'static str, value: f64 },

    /// Squeezing parameters must be non-negative and finite (or the INFINITE sentinel).
    #[error("squeezing parameter must be non-negative and finite, got {0}; use EprState::Infinite for the analytic limit")]
    InvalidSqueezing(f64),

    /// A finite spectral-density matrix was requested for infinite squeezing.
    #[error("analytic limit required: no finite spectral density exists at infinite squeezing")]
    AnalyticLimitRequired,

    /// Matrix/vector shapes disagreed with the operation's contract.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A matrix that must be Hermitian positive semidefinite was not.
    #[error("spectral density violation in {context}: {detail}")]
    PsdViolation {
        context: &'static str,
        detail: String,
    },

    /// The per-frequency linear system could not be solved.
    #[error("singular linear system while solving {context}")]
    SingularSystem { context: &'static str },

    /// Conditioning failed (non-invertible Bell-channel covariance, bad filters).
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// A physical parameter failed validation.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Scenario/preset configuration could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
