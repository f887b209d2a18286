//! Per-cone position Kalman filter and color evidence accumulation.

use nalgebra::Matrix2;

use crate::color::ColorDistribution;
use crate::cone::ConeEstimate;
use crate::error::{Error, Result};
use crate::gaussian::{make_spd, Gaussian2};

/// Grows a cone covariance by `q_per_s · dt`.
pub fn grow_covariance(cone: &mut ConeEstimate, q_per_s: &Matrix2<f64>, dt: f64) {
    if dt > 0.0 {
        cone.position.cov = make_spd(&(cone.position.cov + q_per_s * dt));
    }
}

/// Linear Kalman update with an identity observation model.
pub fn update_position(cone: &ConeEstimate, obs: &Gaussian2) -> Result<ConeEstimate> {
    let prior = &cone.position;
    let innovation_cov = prior.cov + obs.cov;
    let inv = innovation_cov
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::NotPositiveDefinite)?;
    let gain = prior.cov * inv;
    let mean = prior.mean + gain * (obs.mean - prior.mean);
    let cov = (Matrix2::identity() - gain) * prior.cov;
    let mut out = cone.clone();
    out.position = Gaussian2::new(mean, cov);
    Ok(out)
}

/// Adds `weight · obs_color` to the evidence and renormalizes.
pub fn update_color(cone: &ConeEstimate, obs_color: &ColorDistribution, weight: f64) -> ConeEstimate {
    let mut out = cone.clone();
    let obs = obs_color.as_array();
    for (e, o) in out.color_evidence.iter_mut().zip(obs) {
        *e += weight.max(0.0) * o;
    }
    out.color = ColorDistribution::from_weights(out.color_evidence);
    out
}
