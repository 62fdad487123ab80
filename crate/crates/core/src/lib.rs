//! Camera colorimetric mapping: white balance and camera-to-XYZ transforms
//! for arbitrary illuminants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cct;
pub mod color;
pub mod dataset;
pub mod error;
pub mod fitting;
pub mod jobs;
pub mod mlp;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
