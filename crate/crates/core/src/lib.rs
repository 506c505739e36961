//! Point Gaussian encoding of 4D radar point clouds into bird's-eye-view
//! feature maps, and a KL-divergence loss between boxes modeled as Gaussians.
//!
//! Pipeline: [`cloud`] → [`lfa`] + [`gfa`] → [`attributes`] → [`splat`],
//! tied together by [`encoder::encode`]. [`bgl`] is independent of the
//! encoder.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attributes;
pub mod bgl;
pub mod cloud;
pub mod encoder;
pub mod error;
pub mod geom;
pub mod gfa;
pub mod lfa;
pub mod nn;
mod par;
pub mod rng;
pub mod splat;

pub use error::{Error, Result};
