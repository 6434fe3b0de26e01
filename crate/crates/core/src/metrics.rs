//! Depth evaluation metrics, cross-view depth consistency and the L1
//! prior-supervision term.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, PixelPoint, Pose};
use crate::grid::Grid;

/// Thresholds (meters) reported in [`DepthEvalResult::gt_n`].
pub const GT_THRESHOLDS: [u32; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthEvalResult {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub mae: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Fraction of pixels with absolute error above `n` meters.
    pub gt_n: BTreeMap<u32, f64>,
    pub n_valid: usize,
}

/// Standard depth metrics over pixels where `mask` is set and the ground
/// truth lies in `(0, max_range]`.
pub fn evaluate(pred: &Grid<f64>, gt: &Grid<f64>, mask: &Grid<bool>, max_range: f64) -> Result<DepthEvalResult> {
    pred.ensure_same_dims(gt, "prediction vs ground truth")?;
    pred.ensure_same_dims(mask, "prediction vs mask")?;
    let mut n = 0usize;
    let (mut abs_rel, mut sq_rel, mut sq, mut abs) = (0.0, 0.0, 0.0, 0.0);
    let mut deltas = [0usize; 3];
    let mut over = [0usize; GT_THRESHOLDS.len()];
    for ((p, g), m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if !*m || !(*g > 0.0 && *g <= max_range) {
            continue;
        }
        n += 1;
        let e = p - g;
        abs_rel += e.abs() / g;
        sq_rel += e * e / g;
        sq += e * e;
        abs += e.abs();
        let ratio = (p / g).max(g / p);
        for (k, count) in deltas.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *count += 1;
            }
        }
        for (t, count) in GT_THRESHOLDS.iter().zip(over.iter_mut()) {
            if e.abs() > f64::from(*t) {
                *count += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let nf = n as f64;
    Ok(DepthEvalResult {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        mae: abs / nf,
        delta1: deltas[0] as f64 / nf,
        delta2: deltas[1] as f64 / nf,
        delta3: deltas[2] as f64 / nf,
        gt_n: GT_THRESHOLDS
            .iter()
            .zip(over)
            .map(|(t, c)| (*t, c as f64 / nf))
            .collect(),
        n_valid: n,
    })
}

/// One camera of a consistency check: its depth map (prediction), ground
/// truth, model and world pose. Depth values follow
/// [`CameraModel::depth_of`]; 0 marks invalid pixels.
#[derive(Debug, Clone, Copy)]
pub struct DepthView<'a> {
    pub depth: &'a Grid<f64>,
    pub gt: &'a Grid<f64>,
    pub model: &'a CameraModel,
    pub pose: &'a Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepConResult {
    /// Mean of `warped_abs_rel` and `native_abs_rel`.
    pub dep_con: f64,
    /// Abs rel of camera-a depth warped into camera b, against camera-b
    /// ground truth at the landing pixel.
    pub warped_abs_rel: f64,
    /// Abs rel of camera-b depth against its ground truth on the same pixels.
    pub native_abs_rel: f64,
    pub n_valid: usize,
}

/// Cross-view depth consistency of two overlapping cameras.
///
/// Every valid pixel of `a` is lifted twice, with its predicted and its
/// ground-truth depth. The ground-truth point decides where the pixel lands
/// in `b` (rounded, nearest surface wins); pixels landing where `b` has
/// both a prediction and ground truth are compared. The warped error is the
/// relative difference of the two lifted points' depths in `b`; the native
/// error compares `b`'s own prediction with its ground truth there.
pub fn depth_consistency(a: &DepthView<'_>, b: &DepthView<'_>) -> Result<DepConResult> {
    a.depth.ensure_same_dims(a.gt, "camera a depth vs ground truth")?;
    b.depth.ensure_same_dims(b.gt, "camera b depth vs ground truth")?;
    let (wb, hb) = b.depth.dims();
    // per landing pixel: (gt depth in b, warped predicted depth in b)
    let mut landing: Vec<Option<(f64, f64)>> = vec![None; wb * hb];
    let (wa, ha) = a.depth.dims();
    let a_to_b = b.pose.inverse().compose(a.pose);
    for y in 0..ha {
        for x in 0..wa {
            let (dp, dg) = (*a.depth.get(x, y), *a.gt.get(x, y));
            if !(dp > 0.0 && dg > 0.0) {
                continue;
            }
            let px = PixelPoint::new(x as f64, y as f64);
            let (Ok(xp), Ok(xg)) = (a.model.lift(&px, dp), a.model.lift(&px, dg)) else {
                continue;
            };
            let (xp, xg) = (a_to_b.transform_point(&xp), a_to_b.transform_point(&xg));
            let Some(q) = b.model.project_visible(&xg) else {
                continue;
            };
            let (u, v) = (q.u.round(), q.v.round());
            if u < 0.0 || v < 0.0 || u >= wb as f64 || v >= hb as f64 {
                continue;
            }
            let i = v as usize * wb + u as usize;
            let zg = b.model.depth_of(&xg);
            let zp = b.model.depth_of(&xp);
            if !(zg > 0.0) {
                continue;
            }
            if landing[i].is_none_or(|(z, _)| zg < z) {
                landing[i] = Some((zg, zp));
            }
        }
    }
    let (mut warped, mut native, mut n) = (0.0, 0.0, 0usize);
    for (i, l) in landing.iter().enumerate() {
        let Some((zg, zp)) = l else { continue };
        let (db, gb) = (b.depth.data()[i], b.gt.data()[i]);
        if !(db > 0.0 && gb > 0.0) {
            continue;
        }
        warped += (zp - zg).abs() / zg;
        native += (db - gb).abs() / gb;
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let (warped, native) = (warped / n as f64, native / n as f64);
    Ok(DepConResult {
        dep_con: 0.5 * (warped + native),
        warped_abs_rel: warped,
        native_abs_rel: native,
        n_valid: n,
    })
}

/// Default weight of the prior-supervision term.
pub const PRIOR_LOSS_WEIGHT: f64 = 0.005;

/// `lambda * mean |pred - prior|` over prior-valid pixels, 0 without any.
pub fn l1_prior_loss(pred: &Grid<f64>, prior: &Grid<f64>, valid: &Grid<bool>, lambda: f64) -> Result<f64> {
    pred.ensure_same_dims(prior, "prediction vs prior")?;
    pred.ensure_same_dims(valid, "prediction vs prior mask")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for ((p, q), v) in pred.data().iter().zip(prior.data()).zip(valid.data()) {
        if *v {
            sum += (p - q).abs();
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { lambda * sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Grid<f64> {
        Grid::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    fn all(n: usize) -> Grid<bool> {
        Grid::new(n, 1, true)
    }

    #[test]
    fn handworked_three_pixels() {
        let r = evaluate(&row(&[1.0, 2.0, 4.0]), &row(&[1.0, 1.0, 2.0]), &all(3), 200.0).unwrap();
        assert!((r.abs_rel - 2.0 / 3.0).abs() < 1e-12);
        // sq_rel: (0 + 1/1 + 4/2) / 3
        assert!((r.sq_rel - 1.0).abs() < 1e-12);
        assert!((r.rmse - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r.mae - 1.0).abs() < 1e-12);
        assert!((r.delta1 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.delta3 - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.gt_n[&1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.gt_n[&3], 0.0);
    }

    #[test]
    fn perfect_prediction() {
        let g = row(&[1.0, 5.0, 80.0]);
        let r = evaluate(&g, &g, &all(3), 200.0).unwrap();
        assert_eq!((r.abs_rel, r.sq_rel, r.rmse, r.mae), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
    }

    #[test]
    fn doubled_prediction() {
        let g = row(&[1.0, 5.0, 80.0]);
        let p = g.map(|v| 2.0 * v);
        let r = evaluate(&p, &g, &all(3), 200.0).unwrap();
        assert!((r.abs_rel - 1.0).abs() < 1e-12);
        assert_eq!((r.delta1, r.delta2, r.delta3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn range_and_mask_filter_pixels() {
        let r = evaluate(&row(&[1.0, 9.0, 9.0]), &row(&[1.0, 0.0, 300.0]), &all(3), 200.0).unwrap();
        assert_eq!(r.n_valid, 1);
        let m = Grid::from_vec(3, 1, vec![false; 3]).unwrap();
        assert!(matches!(
            evaluate(&row(&[1.0; 3]), &row(&[1.0; 3]), &m, 200.0),
            Err(Error::NoValidPixels)
        ));
        assert!(matches!(
            evaluate(&row(&[1.0; 2]), &row(&[1.0; 3]), &all(3), 200.0),
            Err(Error::SizeMismatch(_))
        ));
    }

    #[test]
    fn prior_loss_examples() {
        let p = row(&[3.0, 4.0, 5.0]);
        let v = Grid::from_vec(3, 1, vec![true, true, false]).unwrap();
        assert_eq!(l1_prior_loss(&p, &p, &v, PRIOR_LOSS_WEIGHT).unwrap(), 0.0);
        let shifted = p.map(|x| x + 1.0);
        assert!((l1_prior_loss(&shifted, &p, &v, PRIOR_LOSS_WEIGHT).unwrap() - 0.005).abs() < 1e-15);
        let none = Grid::new(3, 1, false);
        assert_eq!(l1_prior_loss(&shifted, &p, &none, PRIOR_LOSS_WEIGHT).unwrap(), 0.0);
    }

    fn pairs() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..40)
    }

    proptest! {
        #[test]
        fn delta_ordering_and_bounds(v in pairs()) {
            let p = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.0).collect()).unwrap();
            let g = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.1).collect()).unwrap();
            let r = evaluate(&p, &g, &all(v.len()), 200.0).unwrap();
            prop_assert!(0.0 <= r.delta1 && r.delta1 <= r.delta2 && r.delta2 <= r.delta3 && r.delta3 <= 1.0);
            prop_assert!(r.gt_n[&1] >= r.gt_n[&3] && r.gt_n[&3] >= r.gt_n[&5]);
        }

        #[test]
        fn scale_covariance(v in pairs(), s in 0.1f64..5.0) {
            let p = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.0).collect()).unwrap();
            let g = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.1).collect()).unwrap();
            let r = evaluate(&p, &g, &all(v.len()), 1e9).unwrap();
            let rs = evaluate(&p.map(|x| x * s), &g.map(|x| x * s), &all(v.len()), 1e9).unwrap();
            prop_assert!((r.abs_rel - rs.abs_rel).abs() <= 1e-9 * (1.0 + r.abs_rel));
            prop_assert!((r.rmse * s - rs.rmse).abs() <= 1e-9 * (1.0 + rs.rmse));
            prop_assert!((r.mae * s - rs.mae).abs() <= 1e-9 * (1.0 + rs.mae));
            prop_assert!((r.sq_rel * s - rs.sq_rel).abs() <= 1e-9 * (1.0 + rs.sq_rel));
        }

        #[test]
        fn permutation_invariance(v in pairs(), rot in 0usize..40) {
            let mut w = v.clone();
            let k = rot % w.len();
            w.rotate_left(k);
            let ev = |v: &[(f64, f64)]| {
                let p = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.0).collect()).unwrap();
                let g = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.1).collect()).unwrap();
                evaluate(&p, &g, &all(v.len()), 200.0).unwrap()
            };
            let (a, b) = (ev(&v), ev(&w));
            prop_assert!((a.abs_rel - b.abs_rel).abs() < 1e-12 && a.delta1 == b.delta1);
        }

        #[test]
        fn prior_loss_is_linear(v in prop::collection::vec((0.0f64..50.0, 0.0f64..50.0, any::<bool>()), 1..40), lambda in 0.0f64..1.0) {
            let p = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.0).collect()).unwrap();
            let q = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.1).collect()).unwrap();
            let m = Grid::from_vec(v.len(), 1, v.iter().map(|x| x.2).collect()).unwrap();
            let brute: Vec<f64> = v.iter().filter(|x| x.2).map(|x| (x.0 - x.1).abs()).collect();
            let expected = if brute.is_empty() { 0.0 } else { lambda * brute.iter().sum::<f64>() / brute.len() as f64 };
            let got = l1_prior_loss(&p, &q, &m, lambda).unwrap();
            prop_assert!((got - expected).abs() <= 1e-12 * (1.0 + expected));
            let double = l1_prior_loss(&p, &q, &m, 2.0 * lambda).unwrap();
            prop_assert!((double - 2.0 * got).abs() <= 1e-12 * (1.0 + got));
        }
    }
}
