//! Planar rigid-body poses and body-frame velocities.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

pub fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// A pose in the plane. `theta` is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    #[serde(rename = "theta_rad")]
    pub theta: f64,
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        theta: 0.0,
    };

    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        rotation(self.theta)
    }

    /// `self ⊕ other`: `other` is expressed in this pose's frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Maps a point from this pose's body frame into the parent frame.
    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation()
    }

    /// Maps a parent-frame point into this pose's body frame.
    pub fn inverse_transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation().transpose() * (p - self.translation())
    }

    /// Pose of `other` relative to `self`, i.e. `self⁻¹ ⊕ other`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }
}

pub fn compose(a: &Pose2, b: &Pose2) -> Pose2 {
    let (s, c) = a.theta.sin_cos();
    Pose2::new(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )
}

/// Body-frame velocity: longitudinal, lateral and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Velocity2 {
    #[serde(rename = "vx_mps")]
    pub vx: f64,
    #[serde(rename = "vy_mps")]
    pub vy: f64,
    #[serde(rename = "yaw_rate_radps")]
    pub yaw_rate: f64,
}

impl Velocity2 {
    pub const ZERO: Velocity2 = Velocity2 {
        vx: 0.0,
        vy: 0.0,
        yaw_rate: 0.0,
    };

    pub fn new(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Velocity2 { vx, vy, yaw_rate }
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.yaw_rate.is_finite()
    }
}

/// Single explicit Euler step: the body velocity is rotated by the heading at
/// the start of the step.
pub fn integrate_velocity(pose: &Pose2, vel: &Velocity2, dt: f64) -> Result<Pose2> {
    if dt < 0.0 || dt.is_nan() {
        return Err(Error::NegativeTimeStep(dt));
    }
    let (s, c) = pose.theta.sin_cos();
    Ok(Pose2::new(
        pose.x + (c * vel.vx - s * vel.vy) * dt,
        pose.y + (s * vel.vx + c * vel.vy) * dt,
        pose.theta + vel.yaw_rate * dt,
    ))
}

/// Euler integration split into `steps` equal sub-steps.
pub fn integrate_velocity_substeps(
    pose: &Pose2,
    vel: &Velocity2,
    dt: f64,
    steps: usize,
) -> Result<Pose2> {
    let steps = steps.max(1);
    let h = dt / steps as f64;
    let mut p = *pose;
    for _ in 0..steps {
        p = integrate_velocity(&p, vel, h)?;
    }
    Ok(p)
}

/// The constant body velocity whose single Euler step over `dt` moves `from`
/// exactly onto `to`.
pub fn chord_velocity(from: &Pose2, to: &Pose2, dt: f64) -> Velocity2 {
    if dt <= 0.0 {
        return Velocity2::ZERO;
    }
    let d = from.inverse_transform_point(&to.translation());
    Velocity2::new(
        d.x / dt,
        d.y / dt,
        normalize_angle(to.theta - from.theta) / dt,
    )
}
