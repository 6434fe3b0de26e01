use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{Plane, Sphere, SyntheticScene, Texture};
use crate::error::{Error, Result};
use crate::geometry::{yaw_rotation, CameraModel, FisheyeModel, PinholeIntrinsics, Pose};
use crate::rig::{RigCalibration, RigCamera, RigMetadata};

/// Built-in surround rigs.
///
/// The numbers are plausible stand-ins for the real sensor layouts, not
/// values taken from any dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RigPreset {
    /// Six pinhole cameras, 60 degree yaw spacing, ~70 degree HFOV, so
    /// neighbors share roughly 10 degrees.
    Ring6Pinhole,
    /// Four 220 degree equidistant fisheyes at 90 degree spacing.
    Ring4Fisheye,
}

impl FromStr for RigPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring6_pinhole" => Ok(Self::Ring6Pinhole),
            "ring4_fisheye" => Ok(Self::Ring4Fisheye),
            other => Err(Error::InvalidArgument(format!("unknown preset {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetOptions {
    pub frames: usize,
    /// Image size override; defaults to 640x384 (pinhole) / 768x768 (fisheye).
    pub size: Option<(usize, usize)>,
    pub scene_seed: u64,
    /// Horizontal field of view of the pinhole ring.
    pub pinhole_hfov_deg: f64,
    /// Distance of each camera center from the rig center.
    pub ring_radius: f64,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            frames: 7,
            size: None,
            scene_seed: 7,
            pinhole_hfov_deg: 70.0,
            ring_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRig {
    pub rig: RigCalibration,
    pub scene: SyntheticScene,
}

/// Rig-center (vehicle) pose at a frame: 0.5 m forward per frame with a
/// slow left-to-right turn.
pub fn vehicle_pose(frame: usize) -> Pose {
    let heading = 0.01 * frame as f64;
    Pose::new(
        yaw_rotation(heading),
        Vector3::new(0.05 * frame as f64, 0.0, 0.5 * frame as f64),
    )
}

impl RigPreset {
    pub fn name(&self) -> &'static str {
        match self {
            RigPreset::Ring6Pinhole => "ring6_pinhole",
            RigPreset::Ring4Fisheye => "ring4_fisheye",
        }
    }

    pub fn build(&self, options: &PresetOptions) -> Result<SyntheticRig> {
        if options.frames == 0 {
            return Err(Error::InvalidArgument("at least one frame required".into()));
        }
        let (n, prefix, model) = match self {
            RigPreset::Ring6Pinhole => {
                let (w, h) = options.size.unwrap_or((640, 384));
                let k = PinholeIntrinsics::from_hfov(options.pinhole_hfov_deg, w, h)?;
                (6usize, "cam", CameraModel::Pinhole(k))
            }
            RigPreset::Ring4Fisheye => {
                let (w, h) = options.size.unwrap_or((768, 768));
                let f = (w.min(h) as f64 / 2.0) / 110f64.to_radians();
                let fm = FisheyeModel::equidistant(f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, 220.0, w, h)?;
                (4usize, "fish", CameraModel::Fisheye(fm))
            }
        };
        let r = options.ring_radius;
        // camera-to-vehicle mounting poses
        let mounts: Vec<Pose> = (0..n)
            .map(|i| {
                let yaw = (i as f64 * 360.0 / n as f64).to_radians();
                Pose::new(yaw_rotation(yaw), Vector3::new(r * yaw.sin(), 0.0, r * yaw.cos()))
            })
            .collect();
        let front_inv = mounts[0].inverse();
        let cameras = mounts
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let rel = if i == 0 { Pose::identity() } else { front_inv.compose(m) };
                RigCamera::new(format!("{prefix}{i}"), model, rel)
            })
            .collect::<Vec<_>>();
        let ring_order = cameras.iter().map(|c| c.id.clone()).collect();
        let rig = RigCalibration {
            front_camera_id: cameras[0].id.clone(),
            cameras,
            ring_order,
            front_trajectory: (0..options.frames)
                .map(|t| vehicle_pose(t).compose(&mounts[0]))
                .collect(),
            metadata: RigMetadata {
                sequence_id: format!("{}-seed{}", self.name(), options.scene_seed),
                frame_rate_hz: 10.0,
            },
        };
        rig.validate()?;
        Ok(SyntheticRig {
            rig,
            scene: default_scene(options.scene_seed),
        })
    }
}

/// Closed box (ground, ceiling, four walls) with spheres scattered around
/// the vehicle path, so every camera ray hits textured geometry.
pub fn default_scene(seed: u64) -> SyntheticScene {
    let planes = vec![
        Plane {
            normal: [1.0, 0.0, 0.0],
            offset: 14.0,
        },
        Plane {
            normal: [1.0, 0.0, 0.0],
            offset: -14.0,
        },
        Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 22.0,
        },
        Plane {
            normal: [0.0, 0.0, 1.0],
            offset: -14.0,
        },
        Plane {
            normal: [0.0, 1.0, 0.0],
            offset: 1.6,
        },
        Plane {
            normal: [0.0, 1.0, 0.0],
            offset: -7.0,
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spheres: Vec<Sphere> = Vec::new();
    let mut attempts = 0;
    while spheres.len() < 14 && attempts < 10_000 {
        attempts += 1;
        let radius = rng.gen_range(0.6..1.5);
        let dist = rng.gen_range(7.0..11.0);
        let yaw: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let y = rng.gen_range(-1.5..(1.6 - radius * 0.5));
        let c = Vector3::new(dist * yaw.sin(), y, 2.0 + dist * yaw.cos());
        // keep clear of the driven corridor and the walls
        let path_clear = c.x.abs() > radius + 1.5 || c.z < -2.0 - radius || c.z > 7.0 + radius;
        let walls_clear = c.x.abs() < 13.0 - radius && c.z < 21.0 - radius && c.z > -13.0 + radius;
        let apart = spheres
            .iter()
            .all(|s| (Vector3::from(s.center) - c).norm() > s.radius + radius + 0.5);
        if path_clear && walls_clear && apart {
            spheres.push(Sphere {
                center: c.into(),
                radius,
            });
        }
    }
    SyntheticScene {
        planes,
        spheres,
        texture: Texture {
            seed,
            ..Texture::default()
        },
    }
}

/// Applies a random rigid perturbation to every non-front relative pose:
/// rotation about a uniform axis by an angle uniform in `[0, rot_noise_deg]`
/// and a translation uniform in the ball of radius `trans_noise_m`.
pub fn perturb_rig(rig: &RigCalibration, rot_noise_deg: f64, trans_noise_m: f64, seed: u64) -> Result<RigCalibration> {
    if !(rot_noise_deg >= 0.0 && trans_noise_m >= 0.0) {
        return Err(Error::InvalidArgument("noise magnitudes must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rig.clone();
    for cam in &mut out.cameras {
        if cam.id == rig.front_camera_id {
            continue;
        }
        let axis = random_unit(&mut rng);
        let angle = rng.gen_range(0.0..=1.0) * rot_noise_deg.to_radians();
        let dir = random_unit(&mut rng);
        let radius = trans_noise_m * rng.gen_range(0.0f64..=1.0).cbrt();
        let rot = UnitQuaternion::from_scaled_axis(axis * angle) * cam.pose_rel.rotation;
        cam.pose_rel = Pose::new(rot, cam.pose_rel.translation + dir * radius);
    }
    Ok(out)
}

fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_leaves_rig_unchanged() {
        let rig = RigPreset::Ring6Pinhole.build(&PresetOptions::default()).unwrap().rig;
        assert_eq!(perturb_rig(&rig, 0.0, 0.0, 3).unwrap(), rig);
    }

    #[test]
    fn perturbation_respects_bounds() {
        let rig = RigPreset::Ring6Pinhole.build(&PresetOptions::default()).unwrap().rig;
        let (mut max_rot, mut max_t) = (0.0f64, 0.0f64);
        for seed in 0..1000 {
            let p = perturb_rig(&rig, 1.0, 0.05, seed).unwrap();
            assert_eq!(p.cameras[0], rig.cameras[0]);
            for (a, b) in p.cameras.iter().zip(&rig.cameras) {
                max_rot = max_rot.max(a.pose_rel.rotation_angle_to(&b.pose_rel).to_degrees());
                max_t = max_t.max(a.pose_rel.translation_distance(&b.pose_rel));
            }
        }
        assert!(max_rot <= 1.0 + 1e-9 && max_rot > 0.9, "max rotation {max_rot}");
        assert!(max_t <= 0.05 + 1e-12 && max_t > 0.045, "max translation {max_t}");
    }

    #[test]
    fn perturbation_is_seeded() {
        let rig = RigPreset::Ring6Pinhole.build(&PresetOptions::default()).unwrap().rig;
        assert_eq!(
            perturb_rig(&rig, 1.0, 0.05, 9).unwrap(),
            perturb_rig(&rig, 1.0, 0.05, 9).unwrap()
        );
        assert_ne!(
            perturb_rig(&rig, 1.0, 0.05, 9).unwrap(),
            perturb_rig(&rig, 1.0, 0.05, 10).unwrap()
        );
    }

    #[test]
    fn presets_are_valid_rings() {
        for preset in [RigPreset::Ring6Pinhole, RigPreset::Ring4Fisheye] {
            let s = preset.build(&PresetOptions::default()).unwrap();
            s.rig.validate().unwrap();
            assert_eq!(s.rig.num_frames(), 7);
            // no camera center lies inside a sphere
            for t in 0..7 {
                for cam in &s.rig.cameras {
                    let c = s.rig.absolute_pose(&cam.id, t).unwrap().translation;
                    for sp in &s.scene.spheres {
                        assert!((Vector3::from(sp.center) - c).norm() > sp.radius);
                    }
                }
            }
        }
    }
}
