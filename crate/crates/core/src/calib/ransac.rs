//! Essential-matrix RANSAC on bearing vectors.
//!
//! The model is fit with the linear eight-point algorithm on unit bearings
//! (so fisheye rays beyond 90 degrees are handled) and projected onto the
//! essential manifold. Residuals are a spherical Sampson distance: the
//! epipolar residual divided by its gradient restricted to the tangent
//! planes of both bearings, converted to pixels with a focal scale.
//! Scoring is MSAC (truncated quadratic).

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacOptions {
    pub threshold_px: f64,
    pub confidence: f64,
    pub max_iterations: usize,
}

impl Default for RansacOptions {
    fn default() -> Self {
        Self {
            threshold_px: 1.0,
            confidence: 0.999,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialFit {
    /// `b^T E a = 0` for bearings `a` in the first view and `b` in the second.
    pub essential: Matrix3<f64>,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl EssentialFit {
    pub fn num_inliers(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

const SAMPLE: usize = 8;

/// Linear eight-point fit (least squares when given more than eight).
pub fn essential_eight_point(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Option<Matrix3<f64>> {
    if a.len() < SAMPLE || a.len() != b.len() {
        return None;
    }
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (x, y) in a.iter().zip(b) {
        let mut row = SMatrix::<f64, 9, 1>::zeros();
        for i in 0..3 {
            for j in 0..3 {
                row[3 * i + j] = y[i] * x[j];
            }
        }
        ata += row * row.transpose();
    }
    let eig = SymmetricEigen::new(ata);
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|p, q| p.1.total_cmp(q.1))?;
    let e = eig.eigenvectors.column(imin);
    let m = Matrix3::from_row_slice(e.as_slice());
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let e = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * vt;
    e.iter().all(|v| v.is_finite()).then_some(e)
}

/// Spherical Sampson distance in radians.
pub fn sampson_distance(e: &Matrix3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let a = a.normalize();
    let b = b.normalize();
    let ea = e * a;
    let etb = e.transpose() * b;
    let num = b.dot(&ea);
    let ga = etb - a * a.dot(&etb);
    let gb = ea - b * b.dot(&ea);
    let den = ga.norm_squared() + gb.norm_squared();
    if den <= 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    num.abs() / den.sqrt()
}

/// Robustly fits an essential matrix. `focal_px` converts the angular
/// residual to pixels. Returns `None` with fewer than eight matches or when
/// no model could be fit.
pub fn ransac_essential<R: Rng>(
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
    focal_px: f64,
    options: &RansacOptions,
    rng: &mut R,
) -> Option<EssentialFit> {
    let n = a.len();
    if n < SAMPLE || n != b.len() {
        return None;
    }
    let a: Vec<Vector3<f64>> = a.iter().map(|v| v.normalize()).collect();
    let b: Vec<Vector3<f64>> = b.iter().map(|v| v.normalize()).collect();
    let th = options.threshold_px / focal_px;
    let th2 = th * th;
    let score = |e: &Matrix3<f64>| -> (f64, usize) {
        let mut cost = 0.0;
        let mut count = 0;
        for (x, y) in a.iter().zip(&b) {
            let d = sampson_distance(e, x, y);
            let d2 = d * d;
            if d2 <= th2 {
                count += 1;
                cost += d2;
            } else {
                cost += th2;
            }
        }
        (cost, count)
    };
    let mut best: Option<(Matrix3<f64>, f64, usize)> = None;
    let mut needed = options.max_iterations;
    let mut iterations = 0;
    let mut sa = Vec::with_capacity(SAMPLE);
    let mut sb = Vec::with_capacity(SAMPLE);
    while iterations < needed.min(options.max_iterations) {
        iterations += 1;
        let idx = sample(rng, n, SAMPLE);
        sa.clear();
        sb.clear();
        for i in idx.iter() {
            sa.push(a[i]);
            sb.push(b[i]);
        }
        let Some(e) = essential_eight_point(&sa, &sb) else {
            continue;
        };
        let (cost, count) = score(&e);
        if best.as_ref().is_none_or(|(_, c, _)| cost < *c) {
            best = Some((e, cost, count));
            let w = count as f64 / n as f64;
            let p_all = w.powi(SAMPLE as i32);
            needed = if p_all >= 1.0 - 1e-12 {
                iterations
            } else {
                let k = (1.0 - options.confidence).ln() / (-p_all).ln_1p();
                if k.is_finite() && k < options.max_iterations as f64 {
                    (k.ceil() as usize).max(1)
                } else {
                    options.max_iterations
                }
            };
        }
    }
    let (mut e, _, _) = best?;
    // refit on the consensus set, keeping the refit only if it scores better
    let inlier_mask =
        |e: &Matrix3<f64>| -> Vec<bool> { a.iter().zip(&b).map(|(x, y)| sampson_distance(e, x, y) <= th).collect() };
    for _ in 0..3 {
        let mask = inlier_mask(&e);
        let (ia, ib): (Vec<_>, Vec<_>) = a
            .iter()
            .zip(&b)
            .zip(&mask)
            .filter(|(_, m)| **m)
            .map(|((x, y), _)| (*x, *y))
            .unzip();
        match essential_eight_point(&ia, &ib) {
            Some(refit) if score(&refit).0 < score(&e).0 => e = refit,
            _ => break,
        }
    }
    Some(EssentialFit {
        inliers: inlier_mask(&e),
        essential: e,
        iterations,
    })
}

/// Essential matrix of the relative pose between two cameras given their
/// camera-to-world poses, in the `b^T E a = 0` convention.
pub fn essential_from_poses(pose_a: &crate::geometry::Pose, pose_b: &crate::geometry::Pose) -> Matrix3<f64> {
    // maps a-frame to b-frame: x_b = R x_a + t
    let rel = pose_b.inverse().compose(pose_a);
    let t = rel.translation;
    let tx = Matrix3::new(0.0, -t.z, t.y, t.z, 0.0, -t.x, -t.y, t.x, 0.0);
    tx * rel.rotation_matrix()
}
