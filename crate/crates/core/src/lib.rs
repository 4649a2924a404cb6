//! Benchmark toolkit for generalised co-salient object detection, where some
//! images of a group may not contain the group's common salient object.
//!
//! Modules, bottom-up:
//! - [`model`]: manifests, probability maps, binary masks and their files.
//! - [`sampler`]: training-group synthesis with ZERO labels for noisy images.
//! - [`builder`]: common/zero evaluation group construction and validation.
//! - [`synth`]: synthetic shape datasets with exact masks and tags.
//! - [`metrics`]: mIoU, MAE, F-, S- and E-measure and dataset evaluation.
//! - [`calibration`]: expected calibration error and reliability diagrams.
//! - [`uncertainty`]: entropy uncertainty maps and bias-matrix revision.
//! - [`baseline`]: a training-free colour-consensus co-saliency predictor.

pub mod baseline;
pub mod builder;
pub mod calibration;
pub mod error;
pub mod metrics;
pub mod model;
mod rng;
pub mod sampler;
pub mod synth;
pub mod uncertainty;

#[cfg(test)]
mod testutil;

pub use error::{Error, ErrorCategory, Result};
