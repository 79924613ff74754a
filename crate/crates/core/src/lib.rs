//! Implicit flow encoding for frame interpolation.
//!
//! A pair of bidirectional optical-flow fields between two frames is encoded
//! into a time-conditioned implicit neural representation: a hypernetwork
//! maps a scalar time to the weights of a sine-activated coordinate network
//! that returns the per-unit-time flow at any pixel. Evaluating the
//! representation at an intermediate time and scaling by the time offsets
//! yields flows toward both endpoint frames, which backward-warp and blend
//! them into the intermediate frame. Synthetic scenes with closed-form flow
//! provide ground truth for evaluation.

pub mod error;
pub mod util;

pub mod nn;

mod blobio;
mod engine;

pub mod flow;
pub mod hypernet;
pub mod pipeline;
pub mod siren;
pub mod synth;

pub use error::{Error, Result};
