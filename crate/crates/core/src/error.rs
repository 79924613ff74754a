//! Error type shared across the crate.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("degenerate time interval: t0 = t1 = {t}")]
    DegenerateInterval { t: f64 },

    #[error("t = {t} outside [{t0}, {t1}]; extrapolation refused")]
    TimeOutOfRange { t: f64, t0: f64, t1: f64 },

    #[error("optimization diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },

    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: String, got: String },

    #[error("truncated buffer: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },

    #[error("invalid field {field}: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("scene parse error: {0}")]
    SceneParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for a shape mismatch with two formatted shape descriptions.
    pub fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch { expected: expected.into(), got: got.into() }
    }
}
