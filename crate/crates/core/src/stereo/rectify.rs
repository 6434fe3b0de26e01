use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{PinholeIntrinsics, PixelPoint, Pose};
use crate::grid::Grid;
use crate::rig::Side;

/// Two pinhole views rotated onto a common image plane. In the rectified
/// frames the right camera sits at `+baseline` along x of the left one, so
/// a world point has disparity `u_left - u_right = fx * baseline / z > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RectifiedPair {
    /// Rotation taking left-camera directions into the rectified frame.
    pub rot_left: UnitQuaternion<f64>,
    pub rot_right: UnitQuaternion<f64>,
    pub k_rect: PinholeIntrinsics,
    pub baseline: f64,
    /// Original intrinsics, needed to resample the images.
    pub k_left: PinholeIntrinsics,
    pub k_right: PinholeIntrinsics,
    /// World poses of the rectified cameras.
    pub pose_left: Pose,
    pub pose_right: Pose,
    /// Rectified pixels seen by their own camera and, at some disparity in
    /// `[0, max_disp]`, by the other camera.
    pub overlap_mask_left: Grid<bool>,
    pub overlap_mask_right: Grid<bool>,
}

impl RectifiedPair {
    pub fn rotation(&self, side: Side) -> &UnitQuaternion<f64> {
        match side {
            Side::Left => &self.rot_left,
            Side::Right => &self.rot_right,
        }
    }

    pub fn original_intrinsics(&self, side: Side) -> &PinholeIntrinsics {
        match side {
            Side::Left => &self.k_left,
            Side::Right => &self.k_right,
        }
    }

    pub fn overlap_mask(&self, side: Side) -> &Grid<bool> {
        match side {
            Side::Left => &self.overlap_mask_left,
            Side::Right => &self.overlap_mask_right,
        }
    }

    pub fn pose(&self, side: Side) -> &Pose {
        match side {
            Side::Left => &self.pose_left,
            Side::Right => &self.pose_right,
        }
    }

    /// Original-camera pixel sampled by a rectified pixel, if it lies in
    /// front of the camera.
    pub fn source_pixel(&self, side: Side, pixel: &PixelPoint) -> Option<PixelPoint> {
        let ray = self.rotation(side).inverse_transform_vector(&self.k_rect.ray(pixel));
        self.original_intrinsics(side).project(&ray).ok()
    }

    /// Rectified pixel of an original-camera pixel, with the z component of
    /// the rotated unit-depth ray (`None` if it points away from the
    /// rectified plane).
    pub fn rectified_pixel(&self, side: Side, pixel: &PixelPoint) -> Option<(PixelPoint, f64)> {
        let r = self.rotation(side) * self.original_intrinsics(side).ray(pixel);
        let px = self.k_rect.project(&r).ok()?;
        Some((px, r.z))
    }
}

/// Rectifies two pinhole cameras given their world poses. The rectified x
/// axis points from the left to the right camera center, z is the average
/// optical axis made orthogonal to x. Both views share the averaged
/// intrinsics of the inputs (image size of the left camera).
pub fn rectify_pair(
    left: (&PinholeIntrinsics, &Pose),
    right: (&PinholeIntrinsics, &Pose),
    max_disp: usize,
) -> Result<RectifiedPair> {
    let (kl, pl) = left;
    let (kr, pr) = right;
    let delta = pr.translation - pl.translation;
    let baseline = delta.norm();
    if baseline <= 1e-6 {
        return Err(Error::DegenerateBaseline);
    }
    let x = delta / baseline;
    let fwd = pl.transform_vector(&Vector3::z()) + pr.transform_vector(&Vector3::z());
    let z = fwd - x * x.dot(&fwd);
    if z.norm() < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "optical axes parallel to the baseline".into(),
        ));
    }
    let z = z.normalize();
    let y = z.cross(&x);
    let r_rect = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
    let q_rect = UnitQuaternion::from_rotation_matrix(&r_rect);
    let rot_left = q_rect.inverse() * pl.rotation;
    let rot_right = q_rect.inverse() * pr.rotation;
    let k_rect = PinholeIntrinsics::new(
        0.5 * (kl.fx + kr.fx),
        0.5 * (kl.fy + kr.fy),
        0.5 * (kl.cx + kr.cx),
        0.5 * (kl.cy + kr.cy),
        kl.width,
        kl.height,
    )?;
    let mut pair = RectifiedPair {
        rot_left,
        rot_right,
        k_rect,
        baseline,
        k_left: *kl,
        k_right: *kr,
        pose_left: Pose::new(q_rect, pl.translation),
        pose_right: Pose::new(q_rect, pr.translation),
        overlap_mask_left: Grid::new(0, 0, false),
        overlap_mask_right: Grid::new(0, 0, false),
    };
    let seen = |side: Side| {
        let k = *pair.original_intrinsics(side);
        Grid::from_fn(k_rect.width, k_rect.height, |u, v| {
            pair.source_pixel(side, &PixelPoint::new(u as f64, v as f64))
                .is_some_and(|p| k.contains(&p))
        })
    };
    let seen_l = seen(Side::Left);
    let seen_r = seen(Side::Right);
    pair.overlap_mask_left = mutual(&seen_l, &seen_r, -(max_disp as i64), 0);
    pair.overlap_mask_right = mutual(&seen_r, &seen_l, 0, max_disp as i64);
    Ok(pair)
}

/// `own(u, v)` and `other(u + d, v)` for some `d` in `[lo, hi]`.
fn mutual(own: &Grid<bool>, other: &Grid<bool>, lo: i64, hi: i64) -> Grid<bool> {
    let (w, h) = own.dims();
    let mut out = Grid::new(w, h, false);
    for v in 0..h {
        // prefix counts of the other row for O(1) range queries
        let mut prefix = vec![0usize; w + 1];
        for u in 0..w {
            prefix[u + 1] = prefix[u] + usize::from(*other.get(u, v));
        }
        for u in 0..w {
            if !*own.get(u, v) {
                continue;
            }
            let a = (u as i64 + lo).clamp(0, w as i64) as usize;
            let b = (u as i64 + hi + 1).clamp(0, w as i64) as usize;
            if b > a && prefix[b] > prefix[a] {
                out.set(u, v, true);
            }
        }
    }
    out
}

/// Resamples an original image into the rectified frame of `side`
/// (bilinear). Pixels without a source carry 0 and are false in the mask.
pub fn warp_to_rectified(image: &Grid<f32>, pair: &RectifiedPair, side: Side) -> Result<(Grid<f32>, Grid<bool>)> {
    let k = pair.original_intrinsics(side);
    if image.dims() != (k.width, k.height) {
        return Err(Error::SizeMismatch(format!(
            "image {}x{} vs intrinsics {}x{}",
            image.width(),
            image.height(),
            k.width,
            k.height
        )));
    }
    let (w, h) = (pair.k_rect.width, pair.k_rect.height);
    let rows: Vec<Vec<Option<f32>>> = (0..h)
        .into_par_iter()
        .map(|v| {
            (0..w)
                .map(|u| {
                    let src = pair.source_pixel(side, &PixelPoint::new(u as f64, v as f64))?;
                    image.sample_bilinear(src.u, src.v)
                })
                .collect()
        })
        .collect();
    let mut out = Grid::new(w, h, 0.0f32);
    let mut mask = Grid::new(w, h, false);
    for (v, row) in rows.into_iter().enumerate() {
        for (u, s) in row.into_iter().enumerate() {
            if let Some(val) = s {
                out.set(u, v, val);
                mask.set(u, v, true);
            }
        }
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::yaw_rotation;
    use rand::{Rng, SeedableRng};

    fn k() -> PinholeIntrinsics {
        PinholeIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn already_rectified_pair_is_unchanged() {
        let pl = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let pr = Pose::from_translation(Vector3::new(1.3, 2.0, 3.0));
        let p = rectify_pair((&k(), &pl), (&k(), &pr), 64).unwrap();
        assert!(p.rot_left.angle() < 1e-12);
        assert!(p.rot_right.angle() < 1e-12);
        assert!((p.baseline - 0.3).abs() < 1e-12);
        assert_eq!(p.k_rect, k());
    }

    #[test]
    fn coincident_centers_fail() {
        let pl = Pose::identity();
        let pr = Pose::new(yaw_rotation(0.3), Vector3::zeros());
        assert!(matches!(
            rectify_pair((&k(), &pl), (&k(), &pr), 64),
            Err(Error::DegenerateBaseline)
        ));
    }

    #[test]
    fn toe_in_pair_puts_correspondences_on_rows() {
        let toe = 5f64.to_radians();
        let pl = Pose::new(yaw_rotation(toe), Vector3::new(-0.25, 0.0, 0.0));
        let pr = Pose::new(yaw_rotation(-toe), Vector3::new(0.25, 0.01, 0.02));
        let p = rectify_pair((&k(), &pl), (&k(), &pr), 128).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut n = 0;
        while n < 1000 {
            let x = Vector3::new(
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(3.0..30.0),
            );
            let (Ok(ql), Ok(qr)) = (
                k().project(&pl.inverse_transform_point(&x)),
                k().project(&pr.inverse_transform_point(&x)),
            ) else {
                continue;
            };
            if !k().contains(&ql) || !k().contains(&qr) {
                continue;
            }
            let (rl, _) = p.rectified_pixel(Side::Left, &ql).unwrap();
            let (rr, _) = p.rectified_pixel(Side::Right, &qr).unwrap();
            assert!((rl.v - rr.v).abs() < 1e-6, "{} vs {}", rl.v, rr.v);
            let z = p.pose_left.inverse_transform_point(&x).z;
            assert!((rl.u - rr.u - p.k_rect.fx * p.baseline / z).abs() < 1e-6);
            n += 1;
        }
    }

    #[test]
    fn rectified_frames_differ_by_baseline_translation() {
        let pl = Pose::new(yaw_rotation(-0.5), Vector3::new(0.0, 0.0, 0.5));
        let pr = Pose::new(yaw_rotation(0.5), Vector3::new(0.4, 0.0, 0.3));
        let p = rectify_pair((&k(), &pl), (&k(), &pr), 128).unwrap();
        let rel = p.pose_left.inverse().compose(&p.pose_right);
        assert!(rel.rotation.angle() < 1e-12);
        assert!((rel.translation - Vector3::new(p.baseline, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn overlap_masks_require_both_views() {
        let pl = Pose::new(yaw_rotation(-0.5), Vector3::new(-0.2, 0.0, 0.0));
        let pr = Pose::new(yaw_rotation(0.5), Vector3::new(0.2, 0.0, 0.0));
        let p = rectify_pair((&k(), &pl), (&k(), &pr), 64).unwrap();
        let f = p.overlap_mask_left.fraction_true();
        assert!(f > 0.0 && f < 1.0);
        for v in (0..480).step_by(37) {
            for u in (0..640).step_by(29) {
                if *p.overlap_mask_left.get(u, v) {
                    let src = p
                        .source_pixel(Side::Left, &PixelPoint::new(u as f64, v as f64))
                        .unwrap();
                    assert!(k().contains(&src));
                }
            }
        }
    }
}
