//! Key-frame identification from per-frame deep features.
//!
//! Frames are embedded by an external backbone and stored as KFF1 matrices
//! ([`features`]). Each frame is augmented with its mean absolute distance to a
//! frozen set of labeled key frames ([`distance`]), classified by small
//! gradient-trained heads ([`classifier`]), combined by majority vote
//! ([`ensemble`]), and scored per video with precision, recall and F
//! ([`metrics`]). [`pipeline`] wires these into reproducible runs.

pub mod classifier;
pub mod dataset;
pub mod distance;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
