use thiserror::Error;

/// Errors surfaced by the library. Every variant is an input or configuration
/// problem; none of the numerical routines fail on valid inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Schema {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("non-finite value at denoising step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error(
        "calibration failed: measured latency {measured_ms:.3} ms is below the roofline lower bound {bound_ms:.3} ms"
    )]
    Calibration { measured_ms: f64, bound_ms: f64 },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
