use nalgebra::{Matrix3, Vector3};

/// Least-squares midpoint of several rays `(center, direction)`: the point
/// minimizing the summed squared distance to every ray. Returns `None` for
/// near-parallel configurations or if the point lies behind any ray.
pub fn triangulate_midpoint(rays: &[(Vector3<f64>, Vector3<f64>)]) -> Option<Vector3<f64>> {
    if rays.len() < 2 {
        return None;
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (c, d) in rays {
        let d = d.normalize();
        let p = Matrix3::identity() - d * d.transpose();
        a += p;
        b += p * c;
    }
    let eig = a.symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-12 * hi) {
        return None;
    }
    let x = a.lu().solve(&b)?;
    rays.iter().all(|(c, d)| d.dot(&(x - c)) > 0.0).then_some(x)
}
