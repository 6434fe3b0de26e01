//! JSON rig files.
//!
//! Quaternions are scalar-first `[w, x, y, z]`. A camera's `pose` is its
//! camera-to-front transform; `front_trajectory[t]` is the front camera's
//! camera-to-world pose at frame `t`.

use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, FisheyeMapping, FisheyeModel, PinholeIntrinsics, Pose};
use crate::rig::{RigCalibration, RigCamera, RigMetadata, VirtualSource};

pub const RIG_FILE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEntry {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelEntry {
    Pinhole {
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    },
    Fisheye {
        f: f64,
        cx: f64,
        cy: f64,
        fov_deg: f64,
        width: usize,
        height: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub id: String,
    #[serde(flatten)]
    pub model: ModelEntry,
    pub pose: PoseEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub virtual_source: Option<VirtualSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigFile {
    pub version: u32,
    pub cameras: Vec<CameraEntry>,
    pub front_camera_id: String,
    pub ring_order: Vec<String>,
    #[serde(default)]
    pub front_trajectory: Vec<PoseEntry>,
    #[serde(default)]
    pub metadata: RigMetadata,
}

impl From<&Pose> for PoseEntry {
    fn from(p: &Pose) -> Self {
        Self {
            quaternion: p.quaternion_wxyz(),
            translation: p.translation.into(),
        }
    }
}

impl TryFrom<&PoseEntry> for Pose {
    type Error = Error;

    fn try_from(e: &PoseEntry) -> Result<Self> {
        let [w, x, y, z] = e.quaternion;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n.is_finite() && n > 1e-6) || e.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("invalid pose {e:?}")));
        }
        // already-unit quaternions are kept bit-exact so files round-trip
        let rotation = if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Pose {
            rotation,
            translation: Vector3::from(e.translation),
        })
    }
}

impl From<&CameraModel> for ModelEntry {
    fn from(m: &CameraModel) -> Self {
        match m {
            CameraModel::Pinhole(k) => ModelEntry::Pinhole {
                fx: k.fx,
                fy: k.fy,
                cx: k.cx,
                cy: k.cy,
                width: k.width,
                height: k.height,
            },
            CameraModel::Fisheye(f) => ModelEntry::Fisheye {
                f: f.f,
                cx: f.cx,
                cy: f.cy,
                fov_deg: f.fov_deg,
                width: f.width,
                height: f.height,
            },
        }
    }
}

impl TryFrom<&ModelEntry> for CameraModel {
    type Error = Error;

    fn try_from(e: &ModelEntry) -> Result<Self> {
        Ok(match *e {
            ModelEntry::Pinhole {
                fx,
                fy,
                cx,
                cy,
                width,
                height,
            } => CameraModel::Pinhole(PinholeIntrinsics::new(fx, fy, cx, cy, width, height)?),
            ModelEntry::Fisheye {
                f,
                cx,
                cy,
                fov_deg,
                width,
                height,
            } => {
                let m = FisheyeModel {
                    mapping: FisheyeMapping::Equidistant,
                    f,
                    cx,
                    cy,
                    fov_deg,
                    width,
                    height,
                };
                m.validate()?;
                CameraModel::Fisheye(m)
            }
        })
    }
}

impl From<&RigCalibration> for RigFile {
    fn from(rig: &RigCalibration) -> Self {
        Self {
            version: RIG_FILE_VERSION,
            cameras: rig
                .cameras
                .iter()
                .map(|c| CameraEntry {
                    id: c.id.clone(),
                    model: (&c.model).into(),
                    pose: (&c.pose_rel).into(),
                    virtual_source: c.virtual_source.clone(),
                })
                .collect(),
            front_camera_id: rig.front_camera_id.clone(),
            ring_order: rig.ring_order.clone(),
            front_trajectory: rig.front_trajectory.iter().map(PoseEntry::from).collect(),
            metadata: rig.metadata.clone(),
        }
    }
}

impl TryFrom<&RigFile> for RigCalibration {
    type Error = Error;

    fn try_from(f: &RigFile) -> Result<Self> {
        if f.version != RIG_FILE_VERSION {
            return Err(Error::Format(format!("unsupported rig file version {}", f.version)));
        }
        let cameras = f
            .cameras
            .iter()
            .map(|c| {
                Ok(RigCamera {
                    id: c.id.clone(),
                    model: (&c.model).try_into()?,
                    pose_rel: (&c.pose).try_into()?,
                    virtual_source: c.virtual_source.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let rig = RigCalibration {
            cameras,
            front_camera_id: f.front_camera_id.clone(),
            ring_order: f.ring_order.clone(),
            front_trajectory: f.front_trajectory.iter().map(Pose::try_from).collect::<Result<_>>()?,
            metadata: f.metadata.clone(),
        };
        rig.validate()?;
        Ok(rig)
    }
}

pub fn rig_to_json(rig: &RigCalibration) -> Result<String> {
    Ok(serde_json::to_string_pretty(&RigFile::from(rig))?)
}

pub fn rig_from_json(s: &str) -> Result<RigCalibration> {
    let file: RigFile = serde_json::from_str(s)?;
    RigCalibration::try_from(&file)
}

pub fn write_rig(path: &Path, rig: &RigCalibration) -> Result<()> {
    std::fs::write(path, rig_to_json(rig)? + "\n")?;
    Ok(())
}

pub fn read_rig(path: &Path) -> Result<RigCalibration> {
    rig_from_json(&std::fs::read_to_string(path)?)
}
