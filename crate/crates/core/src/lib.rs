//! Reference-driven image completion conditioned on multi-view geometry.
//!
//! A target photo with a hole is completed from other photos of the same
//! scene: their depth is fused into a point cloud, rendered into the target
//! view, and fed to a dual-branch denoiser whose attention links every
//! target token to the cloud token at the same position.

pub mod dualnet;
pub mod error;
pub mod geometry;
pub mod masking;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod scene;

pub use error::{Error, Result};
pub use raster::{Image, MaskImage};
