//! Focal-length-aware depth tooling: pinhole geometry, focal-diversity data
//! augmentation, depth evaluation metrics, and a small hand-differentiated
//! focal-conditioned depth model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod camera;
pub mod dataset_io;
pub mod error;
pub mod experiment;
pub mod focal_net;
pub mod metrics;
pub mod numerics;
pub mod synthetic;

pub use error::{Error, Result};
