//! Surround rig description: per-camera models, relative poses and the
//! front-camera trajectory.
//!
//! Every camera stores `pose_rel`, its camera-to-front transform. The front
//! camera's world pose at frame `t` is `front_trajectory[t]`, so the world
//! pose of camera `m` at frame `t` is `front_trajectory[t] * pose_rel[m]`.
//! Frames are 0-based.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};

/// Which half of a fisheye field of view a virtual pinhole camera covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualSource {
    pub camera_id: String,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigCamera {
    pub id: String,
    pub model: CameraModel,
    pub pose_rel: Pose,
    /// Set for virtual pinhole cameras derived from a fisheye.
    pub virtual_source: Option<VirtualSource>,
}

impl RigCamera {
    pub fn new(id: impl Into<String>, model: CameraModel, pose_rel: Pose) -> Self {
        Self {
            id: id.into(),
            model,
            pose_rel,
            virtual_source: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RigMetadata {
    pub sequence_id: String,
    pub frame_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigCalibration {
    pub cameras: Vec<RigCamera>,
    pub front_camera_id: String,
    pub ring_order: Vec<String>,
    pub front_trajectory: Vec<Pose>,
    pub metadata: RigMetadata,
}

const IDENTITY_TOL: f64 = 1e-9;

impl RigCalibration {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for cam in &self.cameras {
            if !ids.insert(cam.id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate camera id {}", cam.id)));
            }
        }
        let front = self.camera(&self.front_camera_id)?;
        if front.pose_rel.rotation.angle() > IDENTITY_TOL || front.pose_rel.translation.norm() > IDENTITY_TOL {
            return Err(Error::InvalidArgument(format!(
                "front camera {} must have an identity relative pose",
                front.id
            )));
        }
        let ring: HashSet<&str> = self.ring_order.iter().map(String::as_str).collect();
        if ring.len() != self.ring_order.len() || ring != ids {
            return Err(Error::InvalidArgument(
                "ring_order must be a permutation of the camera ids".into(),
            ));
        }
        Ok(())
    }

    pub fn camera_index(&self, id: &str) -> Result<usize> {
        self.cameras
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| Error::NotFound(format!("camera {id}")))
    }

    pub fn camera(&self, id: &str) -> Result<&RigCamera> {
        Ok(&self.cameras[self.camera_index(id)?])
    }

    pub fn front_index(&self) -> Result<usize> {
        self.camera_index(&self.front_camera_id)
    }

    pub fn num_frames(&self) -> usize {
        self.front_trajectory.len()
    }

    /// Camera indices in ring order.
    pub fn ring_indices(&self) -> Result<Vec<usize>> {
        self.ring_order.iter().map(|id| self.camera_index(id)).collect()
    }

    /// Neighboring camera indices `(left, right)` around the ring, closing
    /// the loop when there are at least three cameras.
    pub fn adjacent_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let ring = self.ring_indices()?;
        let n = ring.len();
        Ok(match n {
            0 | 1 => Vec::new(),
            2 => vec![(ring[0], ring[1])],
            _ => (0..n).map(|i| (ring[i], ring[(i + 1) % n])).collect(),
        })
    }

    /// World pose of camera `id` at `frame`.
    pub fn absolute_pose(&self, id: &str, frame: usize) -> Result<Pose> {
        compose_absolute(self, id, frame)
    }

    /// Relative pose between two cameras: maps camera `b` coordinates into
    /// camera `a` coordinates.
    pub fn relative_between(&self, a: usize, b: usize) -> Pose {
        self.cameras[a].pose_rel.inverse().compose(&self.cameras[b].pose_rel)
    }
}

/// World pose of camera `camera_id` at `frame`, `X_front(frame) * X_rel`.
pub fn compose_absolute(calib: &RigCalibration, camera_id: &str, frame: usize) -> Result<Pose> {
    let cam = calib.camera(camera_id)?;
    let front = calib
        .front_trajectory
        .get(frame)
        .ok_or_else(|| Error::NotFound(format!("frame {frame}")))?;
    Ok(front.compose(&cam.pose_rel))
}

/// Fills a front-camera trajectory of `num_frames` frames from sparse anchor
/// poses assuming constant velocity between anchors (slerp on rotation,
/// linear on translation). Frames outside the anchor span extrapolate the
/// nearest segment.
pub fn interpolate_front_trajectory(anchors: &[(usize, Pose)], num_frames: usize) -> Result<Vec<Pose>> {
    let mut anchors = anchors.to_vec();
    anchors.sort_by_key(|(f, _)| *f);
    if anchors.is_empty() {
        return Err(Error::InsufficientData("no anchor poses".into()));
    }
    if anchors.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate anchor frame".into()));
    }
    if anchors.len() == 1 {
        return Ok(vec![anchors[0].1; num_frames]);
    }
    let interp = |a: &(usize, Pose), b: &(usize, Pose), frame: usize| -> Pose {
        let s = (frame as f64 - a.0 as f64) / (b.0 as f64 - a.0 as f64);
        // relative motion expressed as a scaled increment, so s outside
        // [0, 1] extrapolates at constant velocity
        let delta = a.1.rotation.inverse() * b.1.rotation;
        let rot = a.1.rotation * nalgebra::UnitQuaternion::from_scaled_axis(delta.scaled_axis() * s);
        let t = a.1.translation + (b.1.translation - a.1.translation) * s;
        Pose::new(rot, t)
    };
    Ok((0..num_frames)
        .map(|frame| {
            let seg = anchors
                .windows(2)
                .position(|w| frame <= w[1].0)
                .unwrap_or(anchors.len() - 2);
            interp(&anchors[seg], &anchors[seg + 1], frame)
        })
        .collect())
}
