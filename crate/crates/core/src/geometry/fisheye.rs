use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Vector3};
use serde::{Deserialize, Serialize};

use super::{PixelPoint, UnitRay};
use crate::error::{Error, Result};

/// Radial mapping between incidence angle and pixel radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FisheyeMapping {
    /// `r = f * phi`
    Equidistant,
}

/// Fisheye lens with an explicit field of view.
///
/// A pixel at radius `r` from `(cx, cy)` sees incidence angle `phi = r / f`
/// and azimuth `theta = atan2(v - cy, u - cx)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisheyeModel {
    pub mapping: FisheyeMapping,
    /// Pixels per radian.
    pub f: f64,
    pub cx: f64,
    pub cy: f64,
    /// Full field of view in degrees.
    pub fov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl FisheyeModel {
    pub fn equidistant(f: f64, cx: f64, cy: f64, fov_deg: f64, width: usize, height: usize) -> Result<Self> {
        let m = Self {
            mapping: FisheyeMapping::Equidistant,
            f,
            cx,
            cy,
            fov_deg,
            width,
            height,
        };
        m.validate()?;
        Ok(m)
    }

    /// Square image whose inscribed circle spans the full field of view.
    pub fn centered(fov_deg: f64, size: usize) -> Result<Self> {
        let c = (size as f64 - 1.0) / 2.0;
        let f = (size as f64 / 2.0) / (0.5 * fov_deg.to_radians());
        Self::equidistant(f, c, c, fov_deg, size, size)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "fisheye focal {} must be positive",
                self.f
            )));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg <= 360.0) {
            return Err(Error::InvalidArgument(format!(
                "fisheye fov {} must lie in (0, 360]",
                self.fov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        Ok(())
    }

    pub fn half_fov(&self) -> f64 {
        0.5 * self.fov_deg.to_radians()
    }

    pub fn pixel_to_spherical(&self, pixel: &PixelPoint) -> Result<(f64, f64)> {
        fisheye_pixel_to_spherical(self, pixel)
    }

    pub fn pixel_to_ray(&self, pixel: &PixelPoint) -> Result<UnitRay> {
        let (phi, theta) = self.pixel_to_spherical(pixel)?;
        spherical_to_ray(phi, theta)
    }

    /// Projects a camera-frame direction or point onto the image.
    pub fn project(&self, p: &Vector3<f64>) -> Result<PixelPoint> {
        let rho = p.x.hypot(p.y);
        if rho == 0.0 && p.z <= 0.0 {
            return Err(Error::OutsideFov {
                phi: PI,
                limit: self.half_fov(),
            });
        }
        let phi = rho.atan2(p.z);
        if phi > self.half_fov() {
            return Err(Error::OutsideFov {
                phi,
                limit: self.half_fov(),
            });
        }
        let r = self.f * phi;
        if rho == 0.0 {
            return Ok(PixelPoint::new(self.cx, self.cy));
        }
        Ok(PixelPoint::new(self.cx + r * p.x / rho, self.cy + r * p.y / rho))
    }

    /// Derivative of [`Self::project`] with respect to the camera-frame point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let (x, y, z) = (p.x, p.y, p.z);
        let rho2 = x * x + y * y;
        let rho = rho2.sqrt();
        let n2 = rho2 + z * z;
        if rho < 1e-9 * z.abs().max(1e-300) {
            // on-axis limit: u = cx + f x / z
            let s = self.f / z;
            return Matrix2x3::new(s, 0.0, 0.0, 0.0, s, 0.0);
        }
        let phi = rho.atan2(z);
        // s = phi / rho, pixel offset = f * s * (x, y)
        let s = phi / rho;
        let dphi_drho = z / n2;
        let dphi_dz = -rho / n2;
        let ds_drho = (dphi_drho * rho - phi) / rho2;
        let ds_dx = ds_drho * x / rho;
        let ds_dy = ds_drho * y / rho;
        let ds_dz = dphi_dz / rho;
        let f = self.f;
        Matrix2x3::new(
            f * (s + x * ds_dx),
            f * x * ds_dy,
            f * x * ds_dz,
            f * y * ds_dx,
            f * (s + y * ds_dy),
            f * y * ds_dz,
        )
    }

    pub fn contains(&self, pixel: &PixelPoint) -> bool {
        pixel.u >= -0.5 && pixel.v >= -0.5 && pixel.u < self.width as f64 - 0.5 && pixel.v < self.height as f64 - 0.5
    }
}

/// Unit direction for polar angle `phi` (from +z) and azimuth `theta`.
pub fn spherical_to_ray(phi: f64, theta: f64) -> Result<UnitRay> {
    if !phi.is_finite() || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite spherical coordinates ({phi}, {theta})"
        )));
    }
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Ok(UnitRay::new_unchecked(Vector3::new(sp * ct, sp * st, cp)))
}

/// Maps a fisheye pixel to `(phi, theta)`. The azimuth at the image center is
/// reported as 0. Pixels beyond half the field of view yield
/// [`Error::OutsideFov`].
pub fn fisheye_pixel_to_spherical(model: &FisheyeModel, pixel: &PixelPoint) -> Result<(f64, f64)> {
    if !pixel.is_finite() {
        return Err(Error::InvalidArgument("non-finite pixel".into()));
    }
    let du = pixel.u - model.cx;
    let dv = pixel.v - model.cy;
    let r = du.hypot(dv);
    let phi = match model.mapping {
        FisheyeMapping::Equidistant => r / model.f,
    };
    if phi > model.half_fov() {
        return Err(Error::OutsideFov {
            phi,
            limit: model.half_fov(),
        });
    }
    let theta = if r == 0.0 { 0.0 } else { dv.atan2(du) };
    Ok((phi, theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Vector3<f64>, b: [f64; 3]) -> bool {
        (a - Vector3::from(b)).norm() < 1e-15
    }

    #[test]
    fn spherical_to_ray_cardinal_directions() {
        assert!(close(spherical_to_ray(0.0, 0.0).unwrap().direction(), [0.0, 0.0, 1.0]));
        assert!(close(
            spherical_to_ray(FRAC_PI_2, 0.0).unwrap().direction(),
            [1.0, 0.0, 0.0]
        ));
        assert!(close(
            spherical_to_ray(FRAC_PI_2, FRAC_PI_2).unwrap().direction(),
            [0.0, 1.0, 0.0]
        ));
        assert!(spherical_to_ray(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn fisheye_center_and_unit_radius() {
        let m = FisheyeModel::equidistant(100.0, 320.0, 240.0, 220.0, 640, 480).unwrap();
        assert_eq!(
            fisheye_pixel_to_spherical(&m, &PixelPoint::new(320.0, 240.0)).unwrap(),
            (0.0, 0.0)
        );
        let (phi, theta) = fisheye_pixel_to_spherical(&m, &PixelPoint::new(420.0, 240.0)).unwrap();
        assert!((phi - 1.0).abs() < 1e-15 && theta.abs() < 1e-15);
    }

    #[test]
    fn fisheye_outside_fov_is_reported() {
        let m = FisheyeModel::equidistant(100.0, 320.0, 240.0, 220.0, 640, 480).unwrap();
        let r = m.f * m.half_fov() * 1.01;
        let res = fisheye_pixel_to_spherical(&m, &PixelPoint::new(320.0 + r, 240.0));
        assert!(matches!(res, Err(Error::OutsideFov { .. })));
    }

    #[test]
    fn fov_above_full_sphere_rejected() {
        assert!(FisheyeModel::equidistant(100.0, 1.0, 1.0, 361.0, 4, 4).is_err());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = FisheyeModel::centered(220.0, 800).unwrap();
        for p in [
            Vector3::new(0.3, -0.2, 1.0),
            Vector3::new(2.0, 1.0, -0.5),
            Vector3::new(1e-12, 0.0, 3.0),
        ] {
            let j = m.project_jacobian(&p);
            for c in 0..3 {
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[c] += h;
                b[c] -= h;
                let pa = m.project(&a).unwrap();
                let pb = m.project(&b).unwrap();
                let du = (pa.u - pb.u) / (2.0 * h);
                let dv = (pa.v - pb.v) / (2.0 * h);
                let scale = j.column(c).norm().max(1.0);
                assert!((du - j[(0, c)]).abs() / scale < 1e-4, "{p:?} col {c}");
                assert!((dv - j[(1, c)]).abs() / scale < 1e-4, "{p:?} col {c}");
            }
        }
    }

    proptest! {
        #[test]
        fn ray_round_trip(phi in 1e-3f64..(PI - 1e-3), theta in -PI + 1e-9..PI) {
            let (p2, t2) = spherical_to_ray(phi, theta).unwrap().to_spherical();
            prop_assert!((p2 - phi).abs() < 1e-9);
            prop_assert!((t2 - theta).abs() < 1e-9);
        }

        #[test]
        fn ray_is_unit(phi in 0.0f64..PI, theta in -PI..PI) {
            let r = spherical_to_ray(phi, theta).unwrap();
            prop_assert!((r.direction().norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn pixel_project_round_trip(u in 0.0f64..800.0, v in 0.0f64..800.0) {
            let m = FisheyeModel::centered(220.0, 800).unwrap();
            let px = PixelPoint::new(u, v);
            if let Ok(ray) = m.pixel_to_ray(&px) {
                let back = m.project(ray.direction()).unwrap();
                prop_assert!(back.distance(&px) < 1e-6);
            }
        }
    }
}
