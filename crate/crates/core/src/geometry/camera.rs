use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use super::{FisheyeModel, PinholeIntrinsics, PixelPoint};
use crate::error::Result;

/// Either supported projection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CameraModel {
    Pinhole(PinholeIntrinsics),
    Fisheye(FisheyeModel),
}

impl CameraModel {
    pub fn width(&self) -> usize {
        match self {
            CameraModel::Pinhole(k) => k.width,
            CameraModel::Fisheye(m) => m.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            CameraModel::Pinhole(k) => k.height,
            CameraModel::Fisheye(m) => m.height,
        }
    }

    pub fn project(&self, p: &Vector3<f64>) -> Result<PixelPoint> {
        match self {
            CameraModel::Pinhole(k) => k.project(p),
            CameraModel::Fisheye(m) => m.project(p),
        }
    }

    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        match self {
            CameraModel::Pinhole(k) => k.project_jacobian(p),
            CameraModel::Fisheye(m) => m.project_jacobian(p),
        }
    }

    /// Viewing direction (not normalized for pinhole: z = 1).
    pub fn pixel_ray(&self, pixel: &PixelPoint) -> Result<Vector3<f64>> {
        match self {
            CameraModel::Pinhole(k) => Ok(k.ray(pixel)),
            CameraModel::Fisheye(m) => Ok(m.pixel_to_ray(pixel)?.into_inner()),
        }
    }

    /// Projects and additionally requires the pixel to land inside the image.
    pub fn project_visible(&self, p: &Vector3<f64>) -> Option<PixelPoint> {
        let px = self.project(p).ok()?;
        let inside = match self {
            CameraModel::Pinhole(k) => k.contains(&px),
            CameraModel::Fisheye(m) => m.contains(&px),
        };
        inside.then_some(px)
    }

    /// Depth of a camera-frame point as stored in this camera's depth maps:
    /// z-depth for pinhole, range (ray length) for fisheye.
    pub fn depth_of(&self, p: &Vector3<f64>) -> f64 {
        match self {
            CameraModel::Pinhole(_) => p.z,
            CameraModel::Fisheye(_) => p.norm(),
        }
    }

    /// Camera-frame point for a pixel and its stored depth value.
    pub fn lift(&self, pixel: &PixelPoint, depth: f64) -> Result<Vector3<f64>> {
        match self {
            CameraModel::Pinhole(k) => Ok(k.ray(pixel) * depth),
            CameraModel::Fisheye(m) => Ok(m.pixel_to_ray(pixel)?.into_inner() * depth),
        }
    }

    pub fn as_pinhole(&self) -> Option<&PinholeIntrinsics> {
        match self {
            CameraModel::Pinhole(k) => Some(k),
            CameraModel::Fisheye(_) => None,
        }
    }

    pub fn as_fisheye(&self) -> Option<&FisheyeModel> {
        match self {
            CameraModel::Fisheye(m) => Some(m),
            CameraModel::Pinhole(_) => None,
        }
    }
}
