//! Parametric stand-ins for the camera, LiDAR and fused perception pipelines.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::color::{ColorClass, ColorDistribution};
use crate::cone::{ConeObservation, SensorSource};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian2;
use crate::geometry::{Pose2, Velocity2};
use crate::sim::track::TrackDefinition;

/// One bin of a range-dependent curve; applies to ranges below `upper_m`
/// that are not covered by an earlier bin. The last bin extends to infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBin {
    /// `null` in JSON for the unbounded last bin.
    #[serde(with = "unbounded")]
    pub upper_m: f64,
    pub value: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub fn lookup(curve: &[RangeBin], range: f64) -> f64 {
    curve
        .iter()
        .find(|b| range < b.upper_m)
        .or(curve.last())
        .map_or(0.0, |b| b.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionNoise {
    pub sigma_base_m: f64,
    /// Growth of the standard deviation with squared range, m per m².
    pub sigma_range_coeff: f64,
    /// Multiplier applied along the line of sight.
    #[serde(default = "one")]
    pub radial_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl PositionNoise {
    pub fn sigma(&self, range: f64) -> f64 {
        self.sigma_base_m + self.sigma_range_coeff * range * range
    }

    /// Car-frame covariance for a detection at `p`.
    pub fn covariance(&self, p: &Vector2<f64>) -> Matrix2<f64> {
        let r = p.norm();
        let s = self.sigma(r);
        let (sr, st) = (s * self.radial_factor, s);
        let u = if r > 0.0 { p / r } else { Vector2::new(1.0, 0.0) };
        let v = Vector2::new(-u.y, u.x);
        u * u.transpose() * (sr * sr) + v * v.transpose() * (st * st)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorProfile {
    pub mode: SensorSource,
    pub max_range_m: f64,
    pub fov_half_angle_rad: f64,
    pub position_noise: PositionNoise,
    pub color_accuracy_curve: Vec<RangeBin>,
    pub recall_curve: Vec<RangeBin>,
    /// Expected false positives per frame.
    pub false_positive_rate: f64,
    /// Probability mass placed on the reported class, drawn uniformly from this range.
    #[serde(default = "default_confidence")]
    pub color_confidence: [f64; 2],
}

fn default_confidence() -> [f64; 2] {
    [0.6, 0.95]
}

fn bins(edges: &[f64], values: &[f64]) -> Vec<RangeBin> {
    edges
        .iter()
        .zip(values)
        .map(|(&upper_m, &value)| RangeBin { upper_m, value })
        .collect()
}

const TABLE_EDGES: [f64; 6] = [5.0, 7.5, 10.0, 12.5, 15.0, f64::INFINITY];

impl SensorProfile {
    /// Early camera/LiDAR fusion; color accuracy follows the fused classifier.
    pub fn fusion() -> Self {
        SensorProfile {
            mode: SensorSource::Fusion,
            max_range_m: 20.0,
            fov_half_angle_rad: 1.1,
            position_noise: PositionNoise {
                sigma_base_m: 0.03,
                sigma_range_coeff: 0.0004,
                radial_factor: 1.0,
            },
            color_accuracy_curve: bins(&TABLE_EDGES, &[0.99, 0.99, 1.00, 1.00, 1.00, 0.97]),
            recall_curve: bins(&TABLE_EDGES, &[0.98, 0.98, 0.97, 0.96, 0.93, 0.8]),
            false_positive_rate: 0.3,
            color_confidence: default_confidence(),
        }
    }

    /// LiDAR with intensity-pattern coloring: precise positions, weaker colors.
    pub fn lidar_only() -> Self {
        SensorProfile {
            mode: SensorSource::LidarOnly,
            max_range_m: 20.0,
            fov_half_angle_rad: 1.4,
            position_noise: PositionNoise {
                sigma_base_m: 0.03,
                sigma_range_coeff: 0.0003,
                radial_factor: 1.0,
            },
            color_accuracy_curve: bins(&TABLE_EDGES, &[0.88, 0.93, 0.89, 0.87, 0.80, 0.7]),
            recall_curve: bins(&TABLE_EDGES, &[0.98, 0.98, 0.97, 0.96, 0.93, 0.8]),
            false_positive_rate: 0.3,
            color_confidence: [0.5, 0.8],
        }
    }

    /// Monocular camera: range from bounding-box size, so depth is noisy.
    pub fn camera_only() -> Self {
        SensorProfile {
            mode: SensorSource::CameraOnly,
            max_range_m: 15.0,
            fov_half_angle_rad: 1.1,
            position_noise: PositionNoise {
                sigma_base_m: 0.05,
                sigma_range_coeff: 0.001,
                radial_factor: 2.5,
            },
            color_accuracy_curve: bins(&TABLE_EDGES, &[0.99, 0.98, 0.97, 0.96, 0.95, 0.9]),
            recall_curve: bins(&TABLE_EDGES, &[0.97, 0.96, 0.94, 0.9, 0.85, 0.7]),
            false_positive_rate: 0.3,
            color_confidence: default_confidence(),
        }
    }

    pub fn default_for(mode: SensorSource) -> Self {
        match mode {
            SensorSource::Fusion => Self::fusion(),
            SensorSource::LidarOnly => Self::lidar_only(),
            SensorSource::CameraOnly => Self::camera_only(),
        }
    }

    /// Same frustum with every noise source switched off.
    pub fn noise_free(mut self) -> Self {
        self.position_noise.sigma_base_m = 0.0;
        self.position_noise.sigma_range_coeff = 0.0;
        for b in &mut self.color_accuracy_curve {
            b.value = 1.0;
        }
        for b in &mut self.recall_curve {
            b.value = 1.0;
        }
        self.false_positive_rate = 0.0;
        self.color_confidence = [1.0, 1.0];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |c: &[RangeBin]| c.iter().all(|b| (0.0..=1.0).contains(&b.value));
        let ordered = |c: &[RangeBin]| c.windows(2).all(|w| w[0].upper_m < w[1].upper_m);
        if !in_unit(&self.color_accuracy_curve) || !in_unit(&self.recall_curve) {
            return Err(Error::InvalidConfig(
                "accuracies and recalls must lie in [0, 1]".into(),
            ));
        }
        if !ordered(&self.color_accuracy_curve) || !ordered(&self.recall_curve) {
            return Err(Error::InvalidConfig("range bins must be increasing".into()));
        }
        if self.color_accuracy_curve.is_empty() || self.recall_curve.is_empty() {
            return Err(Error::InvalidConfig("curves must have at least one bin".into()));
        }
        let [lo, hi] = self.color_confidence;
        if !(0.5..=1.0).contains(&lo) || !(lo..=1.0).contains(&hi) {
            return Err(Error::InvalidConfig(
                "color confidence must satisfy 0.5 <= lo <= hi <= 1".into(),
            ));
        }
        if !(self.max_range_m > 0.0)
            || !(self.fov_half_angle_rad > 0.0 && self.fov_half_angle_rad <= PI)
            || !(self.false_positive_rate >= 0.0)
            || !(self.position_noise.sigma_base_m >= 0.0)
            || !(self.position_noise.sigma_range_coeff >= 0.0)
            || !(self.position_noise.radial_factor > 0.0)
        {
            return Err(Error::InvalidConfig(format!(
                "sensor profile {:?} has out-of-range parameters",
                self.mode
            )));
        }
        Ok(())
    }

    /// Whether a car-frame point lies in the sensor frustum.
    pub fn in_frustum(&self, p: &Vector2<f64>) -> bool {
        let r = p.norm();
        r <= self.max_range_m && p.y.atan2(p.x).abs() <= self.fov_half_angle_rad
    }

    /// Like [`in_frustum`](Self::in_frustum) but shrunk by a range and angle margin.
    pub fn in_frustum_with_margin(&self, p: &Vector2<f64>, range_margin: f64, angle_margin: f64) -> bool {
        let r = p.norm();
        r <= self.max_range_m - range_margin
            && p.y.atan2(p.x).abs() <= self.fov_half_angle_rad - angle_margin
    }

    pub fn recall(&self, range: f64) -> f64 {
        lookup(&self.recall_curve, range)
    }

    pub fn color_accuracy(&self, range: f64) -> f64 {
        lookup(&self.color_accuracy_curve, range)
    }
}

/// Additive Gaussian noise on the velocity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityNoise {
    pub vx_sigma_mps: f64,
    pub vy_sigma_mps: f64,
    pub yaw_rate_sigma_radps: f64,
    /// Spread of the per-run wheel-speed scale error.
    #[serde(default)]
    pub speed_scale_sigma: f64,
    /// Spread of the per-run gyro offset.
    #[serde(default)]
    pub yaw_rate_bias_sigma_radps: f64,
}

impl Default for VelocityNoise {
    fn default() -> Self {
        VelocityNoise {
            vx_sigma_mps: 0.03,
            vy_sigma_mps: 0.03,
            yaw_rate_sigma_radps: 0.002,
            speed_scale_sigma: 0.0,
            yaw_rate_bias_sigma_radps: 0.0005,
        }
    }
}

impl VelocityNoise {
    pub const NONE: VelocityNoise = VelocityNoise {
        vx_sigma_mps: 0.0,
        vy_sigma_mps: 0.0,
        yaw_rate_sigma_radps: 0.0,
        speed_scale_sigma: 0.0,
        yaw_rate_bias_sigma_radps: 0.0,
    };
}

/// Systematic odometry error held fixed for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryBias {
    pub speed_scale: f64,
    pub yaw_rate_offset_radps: f64,
}

impl OdometryBias {
    pub const NONE: OdometryBias = OdometryBias {
        speed_scale: 1.0,
        yaw_rate_offset_radps: 0.0,
    };

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, noise: &VelocityNoise) -> Self {
        OdometryBias {
            speed_scale: 1.0 + gaussian(rng, noise.speed_scale_sigma),
            yaw_rate_offset_radps: gaussian(rng, noise.yaw_rate_bias_sigma_radps),
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    }
}

pub fn noisy_velocity<R: Rng + ?Sized>(
    rng: &mut R,
    truth: &Velocity2,
    noise: &VelocityNoise,
    bias: &OdometryBias,
) -> Velocity2 {
    Velocity2::new(
        bias.speed_scale * truth.vx + gaussian(rng, noise.vx_sigma_mps),
        bias.speed_scale * truth.vy + gaussian(rng, noise.vy_sigma_mps),
        truth.yaw_rate + bias.yaw_rate_offset_radps + gaussian(rng, noise.yaw_rate_sigma_radps),
    )
}

/// Samples a reported color distribution whose argmax is correct with
/// probability `accuracy`.
pub fn sample_color<R: Rng + ?Sized>(
    rng: &mut R,
    truth: ColorClass,
    accuracy: f64,
    confidence: [f64; 2],
) -> ColorDistribution {
    let reported = if rng.random::<f64>() < accuracy {
        truth
    } else {
        let others: Vec<ColorClass> = ColorClass::ALL.into_iter().filter(|c| *c != truth).collect();
        others[rng.random_range(0..others.len())]
    };
    let q = if confidence[1] > confidence[0] {
        rng.random_range(confidence[0]..=confidence[1])
    } else {
        confidence[0]
    };
    let u: f64 = rng.random();
    let mut w = [0.0; 3];
    w[reported.index()] = q;
    let rest: Vec<usize> = (0..3).filter(|&i| i != reported.index()).collect();
    w[rest[0]] = (1.0 - q) * u;
    w[rest[1]] = (1.0 - q) * (1.0 - u);
    ColorDistribution::from_weights(w)
}

/// Detections of one pipeline for the car at `pose`.
pub fn observe_cones<R: Rng + ?Sized>(
    rng: &mut R,
    track: &TrackDefinition,
    pose: &Pose2,
    profile: &SensorProfile,
    timestamp: f64,
) -> Vec<ConeObservation> {
    let mut out = Vec::new();
    for cone in &track.cones {
        let p = pose.inverse_transform_point(&cone.position());
        if !profile.in_frustum(&p) {
            continue;
        }
        let r = p.norm();
        if rng.random::<f64>() >= profile.recall(r) {
            continue;
        }
        let sigma = profile.position_noise.sigma(r);
        let u = if r > 0.0 { p / r } else { Vector2::new(1.0, 0.0) };
        let v = Vector2::new(-u.y, u.x);
        let noisy = p
            + u * gaussian(rng, sigma * profile.position_noise.radial_factor)
            + v * gaussian(rng, sigma);
        let color = sample_color(
            rng,
            ColorClass::from(cone.color),
            profile.color_accuracy(r),
            profile.color_confidence,
        );
        out.push(ConeObservation {
            position: Gaussian2::new(noisy, profile.position_noise.covariance(&noisy)),
            color,
            timestamp,
            source: profile.mode,
        });
    }
    let n_fp = if profile.false_positive_rate > 0.0 {
        Poisson::new(profile.false_positive_rate).map_or(0.0, |d| d.sample(rng)) as usize
    } else {
        0
    };
    for _ in 0..n_fp {
        let r = profile.max_range_m * rng.random::<f64>().sqrt();
        let bearing = rng.random_range(-profile.fov_half_angle_rad..=profile.fov_half_angle_rad);
        let p = Vector2::new(r * bearing.cos(), r * bearing.sin());
        let class = ColorClass::from_index(rng.random_range(0..3));
        let color = sample_color(rng, class, 1.0, profile.color_confidence);
        out.push(ConeObservation {
            position: Gaussian2::new(p, profile.position_noise.covariance(&p)),
            color,
            timestamp,
            source: profile.mode,
        });
    }
    out
}
