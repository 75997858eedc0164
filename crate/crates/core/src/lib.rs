//! glowlab: inverse rendering for co-located flashlight captures.
//!
//! A BVH path tracer renders synthetic captures, a dynamic neural radiance
//! cache (a visibility-gated direct network plus an indirect network) is
//! trained against the rendering equation, and per-face albedo and roughness
//! are recovered by gradient descent through a one-bounce estimator.

pub mod brdf;
pub mod cache;
pub mod error;
pub mod experiments;
pub mod image;
pub mod io;
pub mod math;
pub mod rng;
pub mod scene;
pub mod training;
pub mod transport;

pub use error::{Error, Result};
pub use image::Image;
pub use math::{Rgb, Vec3};
