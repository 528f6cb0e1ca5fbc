//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SheError {
    /// Input outside the mathematical domain of an operation (t <= 0, beta <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A (alpha, d) combination or measure the implementation does not cover.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An object used before required calibration/precomputation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Input ruled out by the theorems' standing assumptions (e.g. u0 identically zero).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A missing or inconsistent argument.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Configuration that fails validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// Parameters outside the regime a bound or ODE is stated for.
    #[error("out of regime: {0}")]
    OutOfRegime(String),

    /// Parameter value at which a closed form is singular.
    #[error("singular parameter: {0}")]
    SingularParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SheError>;
