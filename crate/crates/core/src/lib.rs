//! Long-range stereo photogrammetry toolkit.
//!
//! Calibrates cameras from planar-target correspondences under a
//! configurable high-order lens-distortion family, refines everything with
//! damped nonlinear least squares, triangulates distant targets from stereo
//! correspondences, converts results to WGS84 geodetic coordinates, and
//! ships a synthetic-scene harness so every stage can be verified without
//! physical cameras.

pub mod calib;
pub mod error;
pub mod geodesy;
pub mod geometry;
pub mod hybrid;
pub mod io;
pub mod lm;
mod linalg;
pub mod stereo;
pub mod synth;

pub use error::{Error, Result};
