//! Splits a fisheye view into two co-located virtual pinhole cameras, one
//! per horizontal half of the lens field of view, and resamples the fisheye
//! image into them.

use nalgebra::{UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{yaw_rotation, CameraModel, FisheyeModel, PinholeIntrinsics, PixelPoint, Pose};
use crate::grid::Grid;
use crate::rig::{RigCalibration, RigCamera, Side, VirtualSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualOptions {
    pub target_hfov_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Band inside the lens field of view that is never sampled.
    pub edge_margin_deg: f64,
}

impl Default for VirtualOptions {
    fn default() -> Self {
        Self {
            target_hfov_deg: 100.0,
            width: 640,
            height: 480,
            edge_margin_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VirtualPinholeSpec {
    pub intrinsics: PinholeIntrinsics,
    /// Same parent frame as the fisheye pose; translation equals the fisheye
    /// center.
    pub pose: Pose,
    pub source_camera_id: String,
    pub side: Side,
    pub edge_margin_deg: f64,
}

impl VirtualPinholeSpec {
    /// Rotation taking virtual-camera directions into the fisheye frame.
    pub fn rotation_to_fisheye(&self, fisheye_pose: &Pose) -> UnitQuaternion<f64> {
        fisheye_pose.rotation.inverse() * self.pose.rotation
    }

    /// Where a virtual pixel samples the fisheye image, or `None` if its ray
    /// falls into the discarded edge band or outside the lens.
    pub fn source_pixel(&self, fisheye: &FisheyeModel, fisheye_pose: &Pose, pixel: &PixelPoint) -> Option<PixelPoint> {
        let rot = self.rotation_to_fisheye(fisheye_pose);
        self.source_pixel_with(fisheye, &rot, pixel)
    }

    fn source_pixel_with(
        &self,
        fisheye: &FisheyeModel,
        rot: &UnitQuaternion<f64>,
        pixel: &PixelPoint,
    ) -> Option<PixelPoint> {
        let ray = rot * self.intrinsics.ray(pixel);
        let phi = ray.xy().norm().atan2(ray.z);
        if phi > fisheye.half_fov() - self.edge_margin_deg.to_radians() {
            return None;
        }
        fisheye.project(&ray).ok()
    }
}

/// Virtual image together with the mask of pixels that received a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub pixels: Grid<f32>,
    pub valid_mask: Grid<bool>,
}

/// Builds the left and right virtual pinhole cameras for one fisheye. Each
/// is yawed by a quarter of the lens field of view away from the optical
/// axis and shares the fisheye center.
pub fn make_virtual_specs(
    fisheye_id: &str,
    fisheye: &FisheyeModel,
    fisheye_pose: &Pose,
    options: &VirtualOptions,
) -> Result<(VirtualPinholeSpec, VirtualPinholeSpec)> {
    let hfov = options.target_hfov_deg;
    if !(hfov > 0.0 && hfov < 180.0) {
        return Err(Error::InvalidArgument(format!(
            "virtual horizontal fov {hfov} must lie in (0, 180)"
        )));
    }
    if !(options.edge_margin_deg >= 0.0) {
        return Err(Error::InvalidArgument("edge margin must be non-negative".into()));
    }
    // the halves leave a central gap of fov/2 - hfov; keep it within the
    // discarded band width so adjacent-camera overlap is not lost
    if hfov < fisheye.fov_deg / 2.0 - 2.0 * options.edge_margin_deg {
        return Err(Error::InvalidArgument(format!(
            "virtual fov {hfov} too narrow for a {} degree lens",
            fisheye.fov_deg
        )));
    }
    let k = PinholeIntrinsics::from_hfov(hfov, options.width, options.height)?;
    let offset = (fisheye.fov_deg / 4.0).to_radians();
    let make = |side: Side, yaw: f64| VirtualPinholeSpec {
        intrinsics: k,
        pose: fisheye_pose.compose(&Pose::new(yaw_rotation(yaw), Vector3::zeros())),
        source_camera_id: fisheye_id.to_string(),
        side,
        edge_margin_deg: options.edge_margin_deg,
    };
    Ok((make(Side::Left, -offset), make(Side::Right, offset)))
}

/// Inverse-maps every virtual pixel into the fisheye image and samples it
/// bilinearly. Pixels whose source lies outside the image or inside the
/// discarded edge band are invalid and carry 0.
pub fn warp_to_virtual(
    fisheye_image: &Grid<f32>,
    fisheye_id: &str,
    fisheye: &FisheyeModel,
    fisheye_pose: &Pose,
    spec: &VirtualPinholeSpec,
) -> Result<WarpedImage> {
    if spec.source_camera_id != fisheye_id {
        return Err(Error::InvalidArgument(format!(
            "virtual camera built for {} applied to {}",
            spec.source_camera_id, fisheye_id
        )));
    }
    if fisheye_image.dims() != (fisheye.width, fisheye.height) {
        return Err(Error::SizeMismatch(format!(
            "fisheye image {}x{} vs model {}x{}",
            fisheye_image.width(),
            fisheye_image.height(),
            fisheye.width,
            fisheye.height
        )));
    }
    let (w, h) = (spec.intrinsics.width, spec.intrinsics.height);
    let rot = spec.rotation_to_fisheye(fisheye_pose);
    let rows: Vec<Vec<Option<f32>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let src = spec.source_pixel_with(fisheye, &rot, &PixelPoint::new(x as f64, y as f64))?;
                    fisheye_image.sample_bilinear(src.u, src.v)
                })
                .collect()
        })
        .collect();
    let mut pixels = Grid::new(w, h, 0.0f32);
    let mut valid = Grid::new(w, h, false);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, s) in row.into_iter().enumerate() {
            if let Some(v) = s {
                pixels.set(x, y, v);
                valid.set(x, y, true);
            }
        }
    }
    Ok(WarpedImage {
        pixels,
        valid_mask: valid,
    })
}

/// Replaces every fisheye camera of `rig` by its two virtual pinholes
/// (`<id>_L`, `<id>_R`), keeping ring order. The left virtual camera of the
/// old front camera becomes the new front camera, and the trajectory is
/// re-expressed accordingly.
pub fn virtual_rig(
    rig: &RigCalibration,
    options: &VirtualOptions,
) -> Result<(RigCalibration, Vec<VirtualPinholeSpec>)> {
    rig.validate()?;
    let mut cameras = Vec::new();
    let mut specs = Vec::new();
    let mut ring_order = Vec::new();
    let mut front_new = None;
    for id in &rig.ring_order {
        let cam = rig.camera(id)?;
        match &cam.model {
            CameraModel::Pinhole(_) => {
                if *id == rig.front_camera_id {
                    front_new = Some((id.clone(), Pose::identity()));
                }
                ring_order.push(id.clone());
                cameras.push(cam.clone());
            }
            CameraModel::Fisheye(fm) => {
                let (left, right) = make_virtual_specs(id, fm, &cam.pose_rel, options)?;
                for spec in [left, right] {
                    let vid = virtual_id(id, spec.side);
                    if *id == rig.front_camera_id && spec.side == Side::Left {
                        front_new = Some((vid.clone(), cam.pose_rel.inverse().compose(&spec.pose)));
                    }
                    ring_order.push(vid.clone());
                    cameras.push(RigCamera {
                        id: vid,
                        model: CameraModel::Pinhole(spec.intrinsics),
                        pose_rel: spec.pose,
                        virtual_source: Some(VirtualSource {
                            camera_id: id.clone(),
                            side: spec.side,
                        }),
                    });
                    specs.push(spec);
                }
            }
        }
    }
    let (front_id, front_offset) =
        front_new.ok_or_else(|| Error::NotFound(format!("front camera {}", rig.front_camera_id)))?;
    // re-anchor so that the new front camera has an identity relative pose
    let anchor = front_offset;
    let anchor_inv = anchor.inverse();
    for cam in &mut cameras {
        cam.pose_rel = anchor_inv.compose(&cam.pose_rel);
    }
    let front_idx = cameras.iter().position(|c| c.id == front_id).expect("front present");
    cameras[front_idx].pose_rel = Pose::identity();
    let out = RigCalibration {
        cameras,
        front_camera_id: front_id,
        ring_order,
        front_trajectory: rig.front_trajectory.iter().map(|p| p.compose(&anchor)).collect(),
        metadata: rig.metadata.clone(),
    };
    out.validate()?;
    Ok((out, specs))
}

pub fn virtual_id(fisheye_id: &str, side: Side) -> String {
    match side {
        Side::Left => format!("{fisheye_id}_L"),
        Side::Right => format!("{fisheye_id}_R"),
    }
}
