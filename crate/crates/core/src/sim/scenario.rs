//! Drives a car around a track and emits per-frame perception messages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeObservation, SensorSource};
use crate::error::{Error, Result};
use crate::geometry::{chord_velocity, Pose2, Velocity2};
use crate::sim::sensor::{noisy_velocity, observe_cones, OdometryBias, SensorProfile, VelocityNoise};
use crate::sim::track::{Centerline, TrackDefinition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedKnot {
    pub s_m: f64,
    pub v_mps: f64,
}

/// Piecewise-linear speed over arc length, held constant outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedProfile {
    pub knots: Vec<SpeedKnot>,
}

impl SpeedProfile {
    pub fn constant(v_mps: f64) -> Self {
        SpeedProfile {
            knots: vec![SpeedKnot { s_m: 0.0, v_mps }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::InvalidConfig("speed profile has no knots".into()));
        }
        if self.knots.iter().any(|k| !(k.v_mps > 0.0) || !k.s_m.is_finite()) {
            return Err(Error::InvalidConfig("speeds must be positive".into()));
        }
        if self.knots.windows(2).any(|w| w[0].s_m >= w[1].s_m) {
            return Err(Error::InvalidConfig("speed knots must be strictly increasing in s".into()));
        }
        Ok(())
    }

    pub fn speed_at(&self, s: f64) -> f64 {
        let k = &self.knots;
        if s <= k[0].s_m {
            return k[0].v_mps;
        }
        for w in k.windows(2) {
            if s <= w[1].s_m {
                let t = (s - w[0].s_m) / (w[1].s_m - w[0].s_m);
                return w[0].v_mps + t * (w[1].v_mps - w[0].v_mps);
            }
        }
        k[k.len() - 1].v_mps
    }
}

/// Physical sensor or processing stage that can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Fusion,
    Lidar,
    Camera,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub time_s: f64,
    pub pipeline: Pipeline,
    pub alive: bool,
}

/// Timed pipeline failure (and recovery) injections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeSchedule {
    pub events: Vec<ScheduleEvent>,
}

impl ModeSchedule {
    pub fn kill(pipeline: Pipeline, at_s: f64) -> Self {
        ModeSchedule {
            events: vec![ScheduleEvent {
                time_s: at_s,
                pipeline,
                alive: false,
            }],
        }
    }

    /// Sources emitting messages at time `t`. Fusion needs both sensors.
    pub fn active_sources(&self, t: f64) -> Vec<SensorSource> {
        let (mut fusion, mut lidar, mut camera) = (true, true, true);
        let mut events = self.events.clone();
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        for e in events.iter().filter(|e| e.time_s <= t) {
            match e.pipeline {
                Pipeline::Fusion => fusion = e.alive,
                Pipeline::Lidar => lidar = e.alive,
                Pipeline::Camera => camera = e.alive,
            }
        }
        let mut out = Vec::new();
        if fusion && lidar && camera {
            out.push(SensorSource::Fusion);
        }
        if lidar {
            out.push(SensorSource::LidarOnly);
        }
        if camera {
            out.push(SensorSource::CameraOnly);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub track: TrackDefinition,
    pub speed_profile: SpeedProfile,
    pub frame_rate_hz: f64,
    pub seed: u64,
    #[serde(default)]
    pub velocity_noise: VelocityNoise,
    #[serde(default)]
    pub schedule: ModeSchedule,
}

impl SimRun {
    pub fn validate(&self) -> Result<()> {
        self.speed_profile.validate()?;
        if !(self.frame_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("frame rate must be positive".into()));
        }
        if self.track.centerline.len() < 3 || !(self.track.total_length > 0.0) {
            return Err(Error::InvalidConfig("track has no usable centerline".into()));
        }
        Ok(())
    }
}

/// Everything the sensors emit at one instant, plus evaluation-only truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimFrame {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    pub observations: Vec<ConeObservation>,
    /// Pipelines that delivered a message this frame, even an empty one.
    pub messages: Vec<SensorSource>,
    /// Noisy body velocity over the interval ending at this frame.
    pub velocity: Velocity2,
    pub true_pose: Pose2,
}

/// Stateful frame generator shared by open- and closed-loop drivers.
pub struct Simulator {
    track: TrackDefinition,
    profiles: Vec<SensorProfile>,
    velocity_noise: VelocityNoise,
    bias: OdometryBias,
    schedule: ModeSchedule,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(run: &SimRun, profiles: &[SensorProfile]) -> Result<Self> {
        run.validate()?;
        for p in profiles {
            p.validate()?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
        let bias = OdometryBias::sample(&mut rng, &run.velocity_noise);
        Ok(Simulator {
            track: run.track.clone(),
            profiles: profiles.to_vec(),
            velocity_noise: run.velocity_noise,
            bias,
            schedule: run.schedule.clone(),
            rng,
        })
    }

    pub fn track(&self) -> &TrackDefinition {
        &self.track
    }

    pub fn odometry_bias(&self) -> OdometryBias {
        self.bias
    }

    /// Emits the frame for a car that moved from `prev` to `pose` over `dt`.
    pub fn frame(&mut self, timestamp: f64, dt: f64, prev: &Pose2, pose: &Pose2) -> SimFrame {
        let truth = chord_velocity(prev, pose, dt);
        let velocity = if dt > 0.0 {
            noisy_velocity(&mut self.rng, &truth, &self.velocity_noise, &self.bias)
        } else {
            Velocity2::ZERO
        };
        let messages = self.schedule.active_sources(timestamp);
        let mut observations = Vec::new();
        for profile in &self.profiles {
            if messages.contains(&profile.mode) {
                observations.extend(observe_cones(
                    &mut self.rng,
                    &self.track,
                    pose,
                    profile,
                    timestamp,
                ));
            }
        }
        let messages = messages
            .into_iter()
            .filter(|m| self.profiles.iter().any(|p| p.mode == *m))
            .collect();
        SimFrame {
            timestamp,
            dt,
            observations,
            messages,
            velocity,
            true_pose: *pose,
        }
    }
}

/// Open-loop lap: the car follows the centerline at the profile speed.
pub fn run_scenario(run: &SimRun, profiles: &[SensorProfile]) -> Result<Vec<SimFrame>> {
    let mut sim = Simulator::new(run, profiles)?;
    let line: Centerline = run.track.centerline_path();
    let dt = 1.0 / run.frame_rate_hz;
    let mut frames = Vec::new();
    let mut s = 0.0;
    let mut prev = line.pose_at(0.0);
    let mut k = 0usize;
    while s < line.length() {
        let pose = line.pose_at(s);
        let step_dt = if k == 0 { 0.0 } else { dt };
        frames.push(sim.frame(k as f64 * dt, step_dt, &prev, &pose));
        prev = pose;
        s += run.speed_profile.speed_at(s) * dt;
        k += 1;
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::track::{generate_track, RuleLimits, TrackSpec};

    fn circle(length: f64) -> TrackDefinition {
        generate_track(
            &TrackSpec::Circle {
                radius_m: length / std::f64::consts::TAU,
                width_m: 3.0,
                cone_spacing_m: 4.0,
                rules: RuleLimits::default(),
            },
            0,
        )
        .unwrap()
    }

    fn run(track: TrackDefinition, v: f64) -> SimRun {
        SimRun {
            track,
            speed_profile: SpeedProfile::constant(v),
            frame_rate_hz: 10.0,
            seed: 42,
            velocity_noise: VelocityNoise::default(),
            schedule: ModeSchedule::default(),
        }
    }

    #[test]
    fn frame_count_for_one_lap() {
        let r = run(circle(213.0), 5.0);
        let frames = run_scenario(&r, &[SensorProfile::fusion()]).unwrap();
        assert!((425..=427).contains(&frames.len()), "{}", frames.len());
    }

    #[test]
    fn empty_speed_profile_rejected() {
        let mut r = run(circle(100.0), 5.0);
        r.speed_profile.knots.clear();
        assert!(run_scenario(&r, &[SensorProfile::fusion()]).is_err());
    }

    #[test]
    fn deterministic_stream() {
        let r = run(circle(120.0), 6.0);
        let profiles = [SensorProfile::fusion(), SensorProfile::lidar_only()];
        let a = serde_json::to_string(&run_scenario(&r, &profiles).unwrap()).unwrap();
        let b = serde_json::to_string(&run_scenario(&r, &profiles).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn killing_camera_silences_fusion() {
        let s = ModeSchedule::kill(Pipeline::Camera, 10.0);
        assert_eq!(
            s.active_sources(9.9),
            vec![SensorSource::Fusion, SensorSource::LidarOnly, SensorSource::CameraOnly]
        );
        assert_eq!(s.active_sources(10.0), vec![SensorSource::LidarOnly]);
    }

    #[test]
    fn speed_profile_interpolates() {
        let p = SpeedProfile {
            knots: vec![SpeedKnot { s_m: 0.0, v_mps: 4.0 }, SpeedKnot { s_m: 10.0, v_mps: 8.0 }],
        };
        assert_eq!(p.speed_at(-1.0), 4.0);
        assert_eq!(p.speed_at(5.0), 6.0);
        assert_eq!(p.speed_at(20.0), 8.0);
    }
}
