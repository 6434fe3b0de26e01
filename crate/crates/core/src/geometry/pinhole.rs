use nalgebra::{Matrix2x3, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{PixelPoint, Pose};
use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Centered intrinsics with square pixels for a horizontal field of view.
    pub fn from_hfov(hfov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::InvalidArgument(format!(
                "horizontal fov {hfov_deg} must lie in (0, 180)"
            )));
        }
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive and finite (fx {}, fy {})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point.
    pub fn project(&self, p: &Vector3<f64>) -> Result<PixelPoint> {
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera(p.z));
        }
        Ok(PixelPoint::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Derivative of [`Self::project`] with respect to the camera-frame point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    /// Viewing ray through a pixel, scaled to unit z.
    pub fn ray(&self, pixel: &PixelPoint) -> Vector3<f64> {
        Vector3::new((pixel.u - self.cx) / self.fx, (pixel.v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, pixel: &PixelPoint) -> bool {
        pixel.u >= -0.5 && pixel.v >= -0.5 && pixel.u < self.width as f64 - 0.5 && pixel.v < self.height as f64 - 0.5
    }

    /// Returns intrinsics for an image resampled by `factor` (0.5 halves).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let width = ((self.width as f64) * factor).round().max(1.0) as usize;
        let height = ((self.height as f64) * factor).round().max(1.0) as usize;
        Self::new(
            self.fx * factor,
            self.fy * factor,
            (self.cx + 0.5) * factor - 0.5,
            (self.cy + 0.5) * factor - 0.5,
            width,
            height,
        )
    }
}

/// Projects a world point through a camera with camera-to-world pose `pose`.
pub fn project_pinhole(k: &PinholeIntrinsics, pose: &Pose, point: &Vector3<f64>) -> Result<PixelPoint> {
    k.project(&pose.inverse_transform_point(point))
}

/// Lifts a pixel at camera z-depth `depth` back to a world point.
pub fn unproject_pinhole(k: &PinholeIntrinsics, pose: &Pose, pixel: &PixelPoint, depth: f64) -> Result<Vector3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "depth must be positive and finite, got {depth}"
        )));
    }
    if !pixel.is_finite() {
        return Err(Error::InvalidArgument("non-finite pixel".into()));
    }
    Ok(pose.transform_point(&(k.ray(pixel) * depth)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn unit_k() -> PinholeIntrinsics {
        PinholeIntrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 1,
            height: 1,
        }
    }

    #[test]
    fn project_identity_on_axis() {
        let p = project_pinhole(&unit_k(), &Pose::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((p.u, p.v), (0.0, 0.0));
    }

    #[test]
    fn project_offset_point() {
        let k = PinholeIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        let p = project_pinhole(&k, &Pose::identity(), &Vector3::new(1.0, 0.0, 10.0)).unwrap();
        assert!((p.u - 370.0).abs() < 1e-12 && (p.v - 240.0).abs() < 1e-12);
    }

    #[test]
    fn project_behind_camera_fails() {
        let r = project_pinhole(&unit_k(), &Pose::identity(), &Vector3::new(0.0, 0.0, -1.0));
        assert!(matches!(r, Err(Error::BehindCamera(_))));
    }

    #[test]
    fn unproject_principal_point() {
        let x = unproject_pinhole(&unit_k(), &Pose::identity(), &PixelPoint::new(0.0, 0.0), 1.0).unwrap();
        assert_eq!(x, Vector3::new(0.0, 0.0, 1.0));
        assert!(unproject_pinhole(&unit_k(), &Pose::identity(), &PixelPoint::new(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(PinholeIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(PinholeIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    #[test]
    fn thousand_random_round_trips() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let k = PinholeIntrinsics::new(457.0, 460.0, 319.5, 191.5, 640, 384).unwrap();
        let pose = Pose::new(
            UnitQuaternion::from_euler_angles(0.1, -0.7, 0.3),
            Vector3::new(0.4, -1.0, 2.0),
        );
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let px = PixelPoint::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..384.0));
            let d = rng.gen_range(0.5..200.0);
            let x = unproject_pinhole(&k, &pose, &px, d).unwrap();
            let back = project_pinhole(&k, &pose, &x).unwrap();
            worst = worst.max(back.distance(&px));
        }
        assert!(worst < 1e-6, "max round-trip error {worst}");
    }

    proptest! {
        #[test]
        fn project_unproject_inverse(
            fx in 50.0f64..2000.0, fy in 50.0f64..2000.0,
            aa in prop::array::uniform3(-3.0f64..3.0),
            t in prop::array::uniform3(-5.0f64..5.0),
            u in 0.0f64..640.0, v in 0.0f64..480.0, d in 0.1f64..300.0,
        ) {
            let k = PinholeIntrinsics::new(fx, fy, 320.0, 240.0, 640, 480).unwrap();
            let pose = Pose::new(UnitQuaternion::from_scaled_axis(Vector3::from(aa)), Vector3::from(t));
            let px = PixelPoint::new(u, v);
            let x = unproject_pinhole(&k, &pose, &px, d).unwrap();
            let back = project_pinhole(&k, &pose, &x).unwrap();
            prop_assert!(back.distance(&px) < 1e-6);
        }
    }
}
