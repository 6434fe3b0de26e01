//! Geometric core for depth priors on surround camera rings.
//!
//! Camera frames are x right, y down, z forward. Poses map camera
//! coordinates to world (or parent) coordinates. The absolute pose of a rig
//! camera is `front_trajectory[t] * pose_rel`.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod rig;
pub mod stereo;
pub mod synth;
pub mod virtual_pinhole;

pub use error::{Error, Result};
pub use grid::Grid;
