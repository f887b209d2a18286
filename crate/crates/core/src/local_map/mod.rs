//! Short-horizon landmark map in the odometry frame.
//!
//! Each frame runs predict → associate → update → negative observations →
//! prune and emits an immutable [`LocalMapSnapshot`].

pub mod association;
pub mod existence;
pub mod filter;
pub mod mode;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::cone::{ConeEstimate, ConeId, ConeObservation, SensorSource};
use crate::error::Result;
use crate::gaussian::{floor_eigenvalues, Gaussian2};
use crate::geometry::{integrate_velocity, Pose2, Velocity2};
use crate::sim::SensorProfile;

pub use association::{associate, AssociationResult};
pub use existence::ExistenceModel;
pub use filter::{grow_covariance, update_color, update_position};
pub use mode::{MapMode, ModeMonitor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frustum {
    pub max_range_m: f64,
    pub fov_half_angle_rad: f64,
}

impl From<&SensorProfile> for Frustum {
    fn from(p: &SensorProfile) -> Self {
        Frustum {
            max_range_m: p.max_range_m,
            fov_half_angle_rad: p.fov_half_angle_rad,
        }
    }
}

impl Frustum {
    fn contains(&self, p: &Vector2<f64>, range_margin: f64, angle_margin: f64) -> bool {
        p.norm() <= self.max_range_m - range_margin
            && p.y.atan2(p.x).abs() <= self.fov_half_angle_rad - angle_margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceFrustums {
    pub fusion: Frustum,
    pub lidar_only: Frustum,
    pub camera_only: Frustum,
}

impl SourceFrustums {
    pub fn get(&self, s: SensorSource) -> &Frustum {
        match s {
            SensorSource::Fusion => &self.fusion,
            SensorSource::LidarOnly => &self.lidar_only,
            SensorSource::CameraOnly => &self.camera_only,
        }
    }

    pub fn set(&mut self, s: SensorSource, f: Frustum) {
        match s {
            SensorSource::Fusion => self.fusion = f,
            SensorSource::LidarOnly => self.lidar_only = f,
            SensorSource::CameraOnly => self.camera_only = f,
        }
    }
}

impl Default for SourceFrustums {
    fn default() -> Self {
        SourceFrustums {
            fusion: (&SensorProfile::fusion()).into(),
            lidar_only: (&SensorProfile::lidar_only()).into(),
            camera_only: (&SensorProfile::camera_only()).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalMapConfig {
    /// Diagonal of the odometry process noise added to every cone, m² per second.
    /// Hand tuned; not calibrated against real odometry.
    pub odometry_noise_m2_per_s: [f64; 2],
    /// Bhattacharyya gate for association.
    pub gate: f64,
    /// Floor on the observation standard deviation fed to the filter.
    pub min_observation_sigma_m: f64,
    pub existence: ExistenceModel,
    pub fov_range_margin_m: f64,
    pub fov_angle_margin_rad: f64,
    /// Pipelines silent for longer than this are considered failed.
    pub staleness_s: f64,
    pub frustums: SourceFrustums,
    /// Covariance inflation for camera positions when LiDAR positions are available.
    pub degraded_camera_position_scale: f64,
    /// Color evidence weight for LiDAR observations when camera colors are available.
    pub degraded_lidar_color_weight: f64,
    /// Cones further than this from the ego are dropped from the map.
    pub horizon_m: f64,
}

impl Default for LocalMapConfig {
    fn default() -> Self {
        LocalMapConfig {
            odometry_noise_m2_per_s: [0.01, 0.01],
            gate: 1.5,
            min_observation_sigma_m: 0.02,
            existence: ExistenceModel::default(),
            fov_range_margin_m: 1.0,
            fov_angle_margin_rad: 0.05,
            staleness_s: 0.25,
            frustums: SourceFrustums::default(),
            degraded_camera_position_scale: 4.0,
            degraded_lidar_color_weight: 0.2,
            horizon_m: 30.0,
        }
    }
}

impl LocalMapConfig {
    pub fn with_frame_rate(mut self, frame_rate_hz: f64) -> Self {
        self.existence = ExistenceModel::for_rejection_time(frame_rate_hz, 0.5, self.existence.epsilon);
        self
    }

    pub fn process_noise(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.odometry_noise_m2_per_s[0],
            0.0,
            0.0,
            self.odometry_noise_m2_per_s[1],
        )
    }

    /// (position covariance scale, color evidence weight) for a source in a mode.
    pub fn source_weights(&self, mode: MapMode, source: SensorSource) -> (f64, f64) {
        match (mode, source) {
            (MapMode::Degraded, SensorSource::CameraOnly) => (self.degraded_camera_position_scale, 1.0),
            (MapMode::Degraded, SensorSource::LidarOnly) => (1.0, self.degraded_lidar_color_weight),
            _ => (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMapState {
    pub ego: Pose2,
    /// Kept sorted by id.
    pub cones: Vec<ConeEstimate>,
    #[serde(rename = "time_s")]
    pub time: f64,
    pub mode: MapMode,
    pub next_id: ConeId,
}

impl Default for LocalMapState {
    fn default() -> Self {
        LocalMapState {
            ego: Pose2::IDENTITY,
            cones: Vec::new(),
            time: 0.0,
            mode: MapMode::Fusion,
            next_id: 0,
        }
    }
}

impl LocalMapState {
    pub fn cone(&self, id: ConeId) -> Option<&ConeEstimate> {
        self.cones
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.cones[i])
    }

    fn cone_mut(&mut self, id: ConeId) -> Option<&mut ConeEstimate> {
        self.cones
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(move |i| &mut self.cones[i])
    }
}

/// Frozen output of one ingested frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalMapSnapshot {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub ego: Pose2,
    pub mode: MapMode,
    pub cones: Vec<ConeEstimate>,
    /// Cones matched or created by this frame's observations. Cone ids are
    /// stable across snapshots for as long as a cone survives.
    pub observed_ids: Vec<ConeId>,
}

impl LocalMapSnapshot {
    pub fn cone(&self, id: ConeId) -> Option<&ConeEstimate> {
        self.cones.iter().find(|c| c.id == id)
    }
}

/// Advances the ego by dead reckoning and grows every cone covariance.
pub fn predict(state: &LocalMapState, vel: &Velocity2, dt: f64, q_per_s: &Matrix2<f64>) -> Result<LocalMapState> {
    let mut next = state.clone();
    next.ego = integrate_velocity(&state.ego, vel, dt)?;
    for cone in &mut next.cones {
        grow_covariance(cone, q_per_s, dt);
    }
    next.time += dt;
    Ok(next)
}

/// Rewards matched cones, decays unmatched cones in view and deletes the dead.
pub fn apply_negative_observations(
    state: &LocalMapState,
    result: &AssociationResult,
    model: &ExistenceModel,
) -> LocalMapState {
    let mut next = state.clone();
    let mut hit: Vec<ConeId> = result.pairs.iter().map(|p| p.1).collect();
    hit.sort_unstable();
    hit.dedup();
    for id in hit {
        if let Some(c) = next.cone_mut(id) {
            c.existence = model.hit(c.existence);
            c.hits += 1;
        }
    }
    for id in &result.unmatched_cones_in_fov {
        if let Some(c) = next.cone_mut(*id) {
            c.existence = model.miss(c.existence);
        }
    }
    next.cones.retain(|c| model.alive(c.existence));
    next
}

/// Single-writer local map.
#[derive(Debug, Clone)]
pub struct LocalMap {
    config: LocalMapConfig,
    state: LocalMapState,
}

impl LocalMap {
    pub fn new(config: LocalMapConfig) -> Self {
        LocalMap {
            config,
            state: LocalMapState::default(),
        }
    }

    pub fn config(&self) -> &LocalMapConfig {
        &self.config
    }

    pub fn state(&self) -> &LocalMapState {
        &self.state
    }

    /// Replaces the state, e.g. to seed a test scenario.
    pub fn set_state(&mut self, state: LocalMapState) {
        self.state = state;
    }

    fn to_map_frame(&self, obs: &ConeObservation, position_scale: f64) -> Gaussian2 {
        let floor = self.config.min_observation_sigma_m.powi(2);
        let cov = floor_eigenvalues(&(obs.position.cov * position_scale), floor);
        Gaussian2::new(obs.position.mean, cov).transformed(&self.state.ego)
    }

    fn in_view(&self, cone: &ConeEstimate, mode: MapMode) -> bool {
        let local = self.state.ego.inverse_transform_point(&cone.position.mean);
        mode.sources().iter().any(|s| {
            self.config.frustums.get(*s).contains(
                &local,
                self.config.fov_range_margin_m,
                self.config.fov_angle_margin_rad,
            )
        })
    }

    /// Ingests one frame of observations. Only sources used by `mode` update the map.
    pub fn ingest_frame(
        &mut self,
        observations: &[ConeObservation],
        vel: &Velocity2,
        dt: f64,
        mode: MapMode,
    ) -> Result<(LocalMapSnapshot, AssociationResult)> {
        self.state = predict(&self.state, vel, dt, &self.config.process_noise())?;
        self.state.mode = mode;
        let now = self.state.time;
        let pre_existing: Vec<ConeId> = self.state.cones.iter().map(|c| c.id).collect();

        let mut result = AssociationResult::default();
        let mut observed: Vec<ConeId> = Vec::new();
        for &source in mode.sources() {
            let (pos_scale, color_weight) = self.config.source_weights(mode, source);
            let indices: Vec<usize> = observations
                .iter()
                .enumerate()
                .filter(|(_, o)| o.source == source)
                .map(|(i, _)| i)
                .collect();
            if indices.is_empty() {
                continue;
            }
            let batch: Vec<Gaussian2> = indices
                .iter()
                .map(|&i| self.to_map_frame(&observations[i], pos_scale))
                .collect();
            // Each batch is matched one-to-one; a cone seen by both sensors in
            // degraded mode receives one update per sensor.
            let r = associate(&self.state.cones, &batch, self.config.gate);
            for (bi, id) in &r.pairs {
                let obs = &observations[indices[*bi]];
                let cone = self.state.cone(*id).expect("associated cone exists").clone();
                let mut updated = update_position(&cone, &batch[*bi])?;
                updated = update_color(&updated, &obs.color, color_weight);
                updated.last_seen = now;
                *self.state.cone_mut(*id).expect("associated cone exists") = updated;
                if !observed.contains(id) {
                    observed.push(*id);
                }
                if pre_existing.contains(id) {
                    result.pairs.push((indices[*bi], *id));
                }
            }
            for bi in &r.new_observations {
                let obs = &observations[indices[*bi]];
                let id = self.state.next_id;
                self.state.next_id += 1;
                let cone = ConeEstimate::new(id, batch[*bi], self.config.existence.initial, now);
                let mut cone = update_color(&cone, &obs.color, color_weight);
                cone.hits = 1;
                self.state.cones.push(cone);
                observed.push(id);
                result.new_observations.push(indices[*bi]);
            }
        }
        result.unmatched_cones_in_fov = self
            .state
            .cones
            .iter()
            .filter(|c| pre_existing.contains(&c.id) && !observed.contains(&c.id))
            .filter(|c| self.in_view(c, mode))
            .map(|c| c.id)
            .collect();
        self.state = apply_negative_observations(&self.state, &result, &self.config.existence);
        let (ego, horizon) = (self.state.ego.translation(), self.config.horizon_m);
        self.state.cones.retain(|c| (c.position.mean - ego).norm() <= horizon);
        observed.retain(|id| self.state.cone(*id).is_some());
        observed.sort_unstable();

        let snapshot = LocalMapSnapshot {
            timestamp: now,
            ego: self.state.ego,
            mode,
            cones: self.state.cones.clone(),
            observed_ids: observed,
        };
        Ok((snapshot, result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{ColorClass, ColorDistribution};
    use approx::assert_abs_diff_eq;

    fn obs(x: f64, y: f64, sigma: f64, t: f64) -> ConeObservation {
        ConeObservation {
            position: Gaussian2::isotropic(Vector2::new(x, y), sigma),
            color: ColorDistribution::certain(ColorClass::Blue),
            timestamp: t,
            source: SensorSource::Fusion,
        }
    }

    #[test]
    fn predict_zero_step_is_identity() {
        let mut s = LocalMapState::default();
        s.cones.push(ConeEstimate::new(0, Gaussian2::isotropic(Vector2::new(1.0, 1.0), 0.1), 1.0, 0.0));
        let q = Matrix2::identity() * 0.01;
        let p = predict(&s, &Velocity2::new(3.0, 0.0, 0.2), 0.0, &q).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn predict_grows_covariance_additively() {
        let mut s = LocalMapState::default();
        s.cones.push(ConeEstimate::new(0, Gaussian2::isotropic(Vector2::new(1.0, 1.0), 0.1), 1.0, 0.0));
        let q = Matrix2::new(0.01, 0.0, 0.0, 0.01);
        let p = predict(&s, &Velocity2::ZERO, 1.0, &q).unwrap();
        let d = p.cones[0].position.cov - s.cones[0].position.cov;
        assert_abs_diff_eq!(d[(0, 0)], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)], 0.0, epsilon = 1e-15);
        assert_eq!(p.cones[0].position.mean, s.cones[0].position.mean);

        let half = predict(&predict(&s, &Velocity2::ZERO, 0.5, &q).unwrap(), &Velocity2::ZERO, 0.5, &q).unwrap();
        assert!((half.cones[0].position.cov - p.cones[0].position.cov).norm() < 1e-15);
    }

    #[test]
    fn cone_never_in_view_keeps_existence() {
        let mut map = LocalMap::new(LocalMapConfig::default());
        map.ingest_frame(&[obs(-5.0, 0.0, 0.05, 0.0)], &Velocity2::ZERO, 0.0, MapMode::Fusion)
            .unwrap();
        // The cone sits behind the car: out of the frustum, so misses never count.
        let e0 = map.state().cones[0].existence;
        for _ in 0..100 {
            map.ingest_frame(&[], &Velocity2::ZERO, 0.1, MapMode::Fusion).unwrap();
        }
        assert_eq!(map.state().cones.len(), 1);
        assert_eq!(map.state().cones[0].existence, e0);
    }

    #[test]
    fn false_positive_disappears_within_half_second() {
        let mut map = LocalMap::new(LocalMapConfig::default());
        let (s, _) = map
            .ingest_frame(&[obs(6.0, 1.0, 0.05, 0.0)], &Velocity2::ZERO, 0.0, MapMode::Fusion)
            .unwrap();
        assert_eq!(s.cones.len(), 1);
        let mut t = 0.0;
        let mut gone_at = None;
        for _ in 0..10 {
            t += 0.1;
            let (s, _) = map.ingest_frame(&[], &Velocity2::ZERO, 0.1, MapMode::Fusion).unwrap();
            if s.cones.is_empty() && gone_at.is_none() {
                gone_at = Some(t);
            }
        }
        assert!(gone_at.unwrap() < 0.5 - 1e-9);
    }

    #[test]
    fn fusion_mode_ignores_single_sensor_observations() {
        let mut map = LocalMap::new(LocalMapConfig::default());
        let mut o = obs(6.0, 1.0, 0.05, 0.0);
        o.source = SensorSource::LidarOnly;
        let (s, _) = map.ingest_frame(&[o.clone()], &Velocity2::ZERO, 0.0, MapMode::Fusion).unwrap();
        assert!(s.cones.is_empty());
        let (s, _) = map.ingest_frame(&[o], &Velocity2::ZERO, 0.0, MapMode::LidarOnly).unwrap();
        assert_eq!(s.cones.len(), 1);
    }

    #[test]
    fn degraded_mode_merges_both_sensors_into_one_cone() {
        let mut map = LocalMap::new(LocalMapConfig::default());
        let mut l = obs(6.0, 1.0, 0.05, 0.0);
        l.source = SensorSource::LidarOnly;
        l.color = ColorDistribution::certain(ColorClass::Yellow);
        let mut c = obs(6.1, 1.0, 0.2, 0.0);
        c.source = SensorSource::CameraOnly;
        let (s, _) = map.ingest_frame(&[l, c], &Velocity2::ZERO, 0.0, MapMode::Degraded).unwrap();
        assert_eq!(s.cones.len(), 1);
        // Camera color dominates LiDAR color.
        assert_eq!(s.cones[0].color.argmax(), ColorClass::Blue);
    }

    #[test]
    fn snapshots_are_not_mutated_by_later_frames() {
        let mut map = LocalMap::new(LocalMapConfig::default());
        let (first, _) = map
            .ingest_frame(&[obs(6.0, 1.0, 0.1, 0.0)], &Velocity2::ZERO, 0.0, MapMode::Fusion)
            .unwrap();
        let frozen = first.clone();
        for k in 1..20 {
            map.ingest_frame(&[obs(6.0, 1.0 + 0.01 * k as f64, 0.1, 0.1 * k as f64)], &Velocity2::new(1.0, 0.0, 0.1), 0.1, MapMode::Fusion)
                .unwrap();
        }
        assert_eq!(first, frozen);
    }
}
