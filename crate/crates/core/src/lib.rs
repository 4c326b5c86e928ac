//! Layer-wise Koopman linearization of trained multilayer perceptrons.
//!
//! A hidden Linear+ReLU layer of a frozen network is stretched into a
//! trajectory by distilled scaling layers; delay-embedded snapshots of that
//! trajectory are fitted with dynamic mode decomposition, and the fitted
//! one-step operator replaces the layer at inference.

pub mod analysis;
pub mod datasets;
pub mod error;
pub mod hybrid;
pub mod koopman;
pub mod linalg;
pub mod nn;
pub mod pipeline;
pub mod scaling;
pub mod seed;

pub use error::{Error, Result};
