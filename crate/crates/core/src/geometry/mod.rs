//! Camera models, rigid transforms and projection primitives.
//!
//! Frames follow the usual computer-vision convention: x right, y down,
//! z forward (optical axis). A [`Pose`] maps camera coordinates into the
//! parent (world) frame, i.e. it is a camera-to-world transform.

mod camera;
mod fisheye;
mod pinhole;
mod pose;

pub use camera::CameraModel;
pub use fisheye::{fisheye_pixel_to_spherical, spherical_to_ray, FisheyeMapping, FisheyeModel};
pub use pinhole::{project_pinhole, unproject_pinhole, PinholeIntrinsics};
pub use pose::Pose;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous pixel coordinates; integer values are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// A direction of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitRay(Vector3<f64>);

impl UnitRay {
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "cannot normalize ray {:?}",
                v.as_slice()
            )));
        }
        Ok(Self(v / n))
    }

    /// Wraps a vector the caller guarantees to be unit length.
    pub(crate) fn new_unchecked(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub fn direction(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Vector3<f64> {
        self.0
    }

    /// Polar angle from the +z axis and azimuth in the image plane.
    pub fn to_spherical(&self) -> (f64, f64) {
        let d = &self.0;
        let phi = d.z.clamp(-1.0, 1.0).acos();
        let rho = d.x.hypot(d.y);
        let theta = if rho == 0.0 { 0.0 } else { d.y.atan2(d.x) };
        (phi, theta)
    }
}

/// Rotation about the camera y axis (pointing down); positive angles turn
/// the optical axis toward +x.
pub fn yaw_rotation(angle_rad: f64) -> nalgebra::UnitQuaternion<f64> {
    nalgebra::UnitQuaternion::from_axis_angle(&Vector3::y_axis(), angle_rad)
}
