//! Harmonizing a pasted element into a painting by two-pass neural patch
//! style transfer.
//!
//! The pipeline: a VGG-style [`backbone`] extracts activations, [`mapping`]
//! matches input patches to painting patches, [`losses`] turn the matched
//! activations into reconstruction targets, the [`optimizer`] solves for the
//! pixels of the masked region, and [`postprocess`] cleans up the result.
//! [`harmonizer`] ties the passes together and [`estimator`] picks the loss
//! weights from the painting's style.

pub mod backbone;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod harmonizer;
pub mod image;
pub mod io;
pub mod losses;
pub mod mapping;
pub mod optimizer;
pub mod postprocess;
pub mod synthetic;

pub use error::{Error, Result};
