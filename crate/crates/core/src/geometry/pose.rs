use nalgebra::{Matrix3, Matrix4, Point3, Translation3, UnitQuaternion, Vector3};

/// Rigid transform with a unit quaternion rotation and a translation in
/// meters, interpreted as camera-to-world.
///
/// `a.compose(&b)` is the matrix product `a * b`: `b` is applied first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        let mut rotation = rotation;
        rotation.renormalize();
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    /// Builds a pose from a scalar-first quaternion `[w, x, y, z]`, which is
    /// normalized on the way in.
    pub fn from_wxyz(q: [f64; 4], translation: [f64; 3]) -> Self {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        Self::new(
            UnitQuaternion::from_quaternion(quat),
            Vector3::new(translation[0], translation[1], translation[2]),
        )
    }

    /// Scalar-first quaternion `[w, x, y, z]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_isometry(&self) -> nalgebra::Isometry3<f64> {
        nalgebra::Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose::new(inv, -(inv * self.translation))
    }

    /// Maps a point from the local (camera) frame into the parent frame.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a point from the parent frame into the local (camera) frame.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.translation))
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn transform_point3(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.transform_point(&p.coords))
    }

    /// Rotation angle (radians) of `self^-1 * other`.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Camera center in the parent frame.
    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose_strategy() -> impl Strategy<Value = Pose> {
        (
            prop::array::uniform3(-3.0f64..3.0),
            prop::array::uniform3(-10.0f64..10.0),
        )
            .prop_map(|(aa, t)| Pose::new(UnitQuaternion::from_scaled_axis(Vector3::from(aa)), Vector3::from(t)))
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        assert!(a.rotation_angle_to(b) < tol, "rotation {}", a.rotation_angle_to(b));
        assert!(a.translation_distance(b) < tol);
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(p in pose_strategy()) {
            let id = p.compose(&p.inverse());
            prop_assert!((id.rotation.quaternion().norm() - 1.0).abs() < 1e-9);
            prop_assert!(id.rotation.angle() < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
        }

        #[test]
        fn composition_is_associative(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            prop_assert!(lhs.rotation_angle_to(&rhs) < 1e-9);
            prop_assert!(lhs.translation_distance(&rhs) < 1e-9);
        }

        #[test]
        fn identity_is_neutral(a in pose_strategy()) {
            assert_pose_close(&a.compose(&Pose::identity()), &a, 1e-12);
            assert_pose_close(&Pose::identity().compose(&a), &a, 1e-12);
        }
    }

    #[test]
    fn compose_matches_matrix_product() {
        let yaw = Pose::new(
            UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2),
            Vector3::zeros(),
        );
        let shift = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let composed = yaw.compose(&shift).to_matrix();
        let expected = yaw.to_matrix() * shift.to_matrix();
        assert!((composed - expected).abs().max() < 1e-12);
        // 90 degrees about +y sends +x to -z
        assert!((composed[(2, 3)] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn wxyz_is_normalized_on_load() {
        let p = Pose::from_wxyz([2.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0]);
        assert!((p.quaternion_wxyz()[0] - 1.0).abs() < 1e-15);
    }
}
