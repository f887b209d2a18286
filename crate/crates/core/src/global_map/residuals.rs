//! Residuals and analytic Jacobians for the two factor types.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use crate::geometry::{normalize_angle, rotation, Pose2};

/// d(Rᵀ(θ))/dθ
fn rotation_transpose_derivative(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(-s, c, -c, -s)
}

/// Odometry residual `rel⁻¹ ⊕ (xi⁻¹ ⊕ xj)` in (x, y, θ) coordinates.
pub fn odometry_residual(xi: &Pose2, xj: &Pose2, rel: &Pose2) -> Vector3<f64> {
    let ri_t = rotation(xi.theta).transpose();
    let rm_t = rotation(rel.theta).transpose();
    let d = ri_t * (xj.translation() - xi.translation());
    let t = rm_t * (d - rel.translation());
    Vector3::new(t.x, t.y, normalize_angle(xj.theta - xi.theta - rel.theta))
}

/// Jacobians of [`odometry_residual`] with respect to `xi` and `xj`.
pub fn odometry_jacobians(xi: &Pose2, xj: &Pose2, rel: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
    let ri_t = rotation(xi.theta).transpose();
    let rm_t = rotation(rel.theta).transpose();
    let a = rm_t * ri_t;
    let dt = xj.translation() - xi.translation();
    let dth = rm_t * rotation_transpose_derivative(xi.theta) * dt;

    let mut ji = Matrix3::zeros();
    ji.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a));
    ji[(0, 2)] = dth.x;
    ji[(1, 2)] = dth.y;
    ji[(2, 2)] = -1.0;

    let mut jj = Matrix3::zeros();
    jj.fixed_view_mut::<2, 2>(0, 0).copy_from(&a);
    jj[(2, 2)] = 1.0;
    (ji, jj)
}

/// Predicted body-frame position of `landmark` seen from `pose`.
pub fn predict_observation(pose: &Pose2, landmark: &Vector2<f64>) -> Vector2<f64> {
    rotation(pose.theta).transpose() * (landmark - pose.translation())
}

/// `z − h(pose, landmark)`
pub fn observation_residual(pose: &Pose2, landmark: &Vector2<f64>, z: &Vector2<f64>) -> Vector2<f64> {
    z - predict_observation(pose, landmark)
}

/// Jacobians of [`observation_residual`] with respect to the pose and the landmark.
pub fn observation_jacobians(pose: &Pose2, landmark: &Vector2<f64>) -> (Matrix2x3<f64>, Matrix2<f64>) {
    let r_t = rotation(pose.theta).transpose();
    let d = landmark - pose.translation();
    let dth = -(rotation_transpose_derivative(pose.theta) * d);
    let mut jp = Matrix2x3::zeros();
    jp.fixed_view_mut::<2, 2>(0, 0).copy_from(&r_t);
    jp[(0, 2)] = dth.x;
    jp[(1, 2)] = dth.y;
    (jp, -r_t)
}
