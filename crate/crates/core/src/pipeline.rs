//! End-to-end runs: simulation, local map, planner and global map, evaluation.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_map, planning_stats, EvalReport, IcpConfig, PlanningSample, TimingStats};
use crate::geometry::Pose2;
use crate::global_map::{GlobalMap, GlobalMapConfig, Graph, MapCone};
use crate::io::{self, SnapshotRecord, PLANNER_SCHEMA, SNAPSHOT_SCHEMA};
use crate::local_map::{Frustum, LocalMap, LocalMapConfig, ModeMonitor};
use crate::planner::{plan, CandidateScore, PlannerConfig, PlannerOutput};
use crate::sim::{
    generate_track, ModeSchedule, SensorProfile, SimFrame, SimRun, Simulator, SpeedProfile, TrackDefinition, TrackSpec,
    VelocityNoise,
};

/// Pure-pursuit following of the planned path instead of the true centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClosedLoopConfig {
    pub lookahead_m: f64,
    /// The run fails once the car is this far from the true centerline.
    pub max_deviation_m: f64,
    pub max_duration_s: f64,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig {
            lookahead_m: 5.0,
            max_deviation_m: 2.5,
            max_duration_s: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub track_spec: TrackSpec,
    pub track_seed: u64,
    /// Track JSON to use instead of generating from `track_spec`.
    pub track_file: Option<PathBuf>,
    pub sensor_profiles: Vec<SensorProfile>,
    pub speed_profile: SpeedProfile,
    pub frame_rate_hz: f64,
    /// Seed for all sensor and odometry noise.
    pub seed: u64,
    pub velocity_noise: VelocityNoise,
    pub mode_schedule: ModeSchedule,
    pub local_map: LocalMapConfig,
    pub global_map: GlobalMapConfig,
    pub planner: PlannerConfig,
    pub icp: IcpConfig,
    pub closed_loop: Option<ClosedLoopConfig>,
    /// Distance driven past the finish line so the loop can close.
    pub run_out_m: f64,
    pub verbose_candidates: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset("fsg-like-12ms").expect("built-in preset")
    }
}

pub const PRESETS: [&str; 6] = [
    "fsg-like-12ms",
    "fsg-like-5ms",
    "noise-free",
    "degraded-5ms",
    "lidar-5ms",
    "camera-5ms",
];

impl RunConfig {
    pub fn preset(name: &str) -> Option<RunConfig> {
        let base = |speed: f64, profiles: Vec<SensorProfile>| RunConfig {
            track_spec: TrackSpec::fsg_like(),
            track_seed: 1,
            track_file: None,
            sensor_profiles: profiles,
            speed_profile: SpeedProfile::constant(speed),
            frame_rate_hz: 10.0,
            seed: 1,
            velocity_noise: VelocityNoise::default(),
            mode_schedule: ModeSchedule::default(),
            local_map: LocalMapConfig::default().with_frame_rate(10.0),
            global_map: GlobalMapConfig::default(),
            planner: PlannerConfig::default(),
            icp: IcpConfig::default(),
            closed_loop: None,
            run_out_m: 15.0,
            verbose_candidates: false,
        };
        Some(match name {
            "fsg-like-12ms" => base(12.0, vec![SensorProfile::fusion()]),
            "fsg-like-5ms" => base(5.0, vec![SensorProfile::fusion()]),
            "noise-free" => RunConfig {
                velocity_noise: VelocityNoise::NONE,
                ..base(5.0, vec![SensorProfile::fusion().noise_free()])
            },
            "degraded-5ms" => base(5.0, vec![SensorProfile::lidar_only(), SensorProfile::camera_only()]),
            "lidar-5ms" => base(5.0, vec![SensorProfile::lidar_only()]),
            "camera-5ms" => base(5.0, vec![SensorProfile::camera_only()]),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.run_out_m >= 0.0 && self.run_out_m.is_finite()) {
            return bad("run_out_m must be non-negative");
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame_rate_hz must be positive");
        }
        if self.sensor_profiles.is_empty() {
            return bad("at least one sensor profile is required");
        }
        for p in &self.sensor_profiles {
            p.validate()?;
        }
        self.speed_profile.validate()?;
        self.planner.validate()?;
        if let Some(path) = &self.track_file {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!("track file {} does not exist", path.display())));
            }
        }
        if let Some(c) = &self.closed_loop {
            if !(c.lookahead_m > 0.0 && c.max_deviation_m > 0.0 && c.max_duration_s > 0.0) {
                return bad("closed-loop parameters must be positive");
            }
        }
        Ok(())
    }

    /// Copy with local-map frustums matching the configured sensors.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        for p in &self.sensor_profiles {
            c.local_map.frustums.set(p.mode, Frustum::from(p));
        }
        c
    }

    pub fn load_track(&self) -> Result<TrackDefinition> {
        match &self.track_file {
            Some(path) => io::read_json(path),
            None => generate_track(&self.track_spec, self.track_seed),
        }
    }
}

/// Wall-clock samples per pipeline stage, in seconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimes {
    pub simulation: Vec<f64>,
    pub local_map: Vec<f64>,
    pub planner: Vec<f64>,
    pub global_map: Vec<f64>,
}

impl StageTimes {
    pub fn summary(&self) -> Vec<TimingStats> {
        [
            ("simulation", &self.simulation),
            ("local_map", &self.local_map),
            ("planner", &self.planner),
            ("global_map", &self.global_map),
        ]
        .into_iter()
        .filter_map(|(name, v)| TimingStats::from_seconds(name, v))
        .collect()
    }
}

/// Planner and global map driven by a stream of snapshots.
pub struct Backend {
    planner: PlannerConfig,
    verbose: bool,
    global: GlobalMap,
    prev_ego: Option<Pose2>,
    first: Option<(Pose2, Option<Pose2>)>,
    pub planner_log: Vec<PlannerOutput>,
    pub times: StageTimes,
}

#[derive(Debug, Clone)]
pub struct BackendOutputs {
    pub planner_log: Vec<PlannerOutput>,
    pub graph: Graph,
    pub map: Vec<MapCone>,
    pub dead_reckoned_map: Vec<MapCone>,
    /// Transform from the map frame into the world frame at the first snapshot, if known.
    pub map_to_world: Option<Pose2>,
    pub times: StageTimes,
}

impl Backend {
    pub fn new(planner: PlannerConfig, global: GlobalMapConfig, verbose: bool) -> Self {
        Backend {
            planner,
            verbose,
            global: GlobalMap::new(global),
            prev_ego: None,
            first: None,
            planner_log: Vec::new(),
            times: StageTimes::default(),
        }
    }

    pub fn process(&mut self, record: &SnapshotRecord) -> Result<&PlannerOutput> {
        let snap = &record.snapshot;
        let t0 = Instant::now();
        let p = plan(snap, &self.planner);
        let mut out = PlannerOutput::from_plan(snap.timestamp, &p, self.verbose);
        out.true_pose = record.true_pose;
        self.times.planner.push(t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let odom = self.prev_ego.map_or(Pose2::IDENTITY, |prev| prev.between(&snap.ego));
        self.global.add_snapshot(snap, &odom)?;
        self.prev_ego = Some(snap.ego);
        self.first.get_or_insert((snap.ego, record.true_pose));
        self.times.global_map.push(t1.elapsed().as_secs_f64());

        self.planner_log.push(out);
        Ok(self.planner_log.last().unwrap())
    }

    /// Final optimization at lap end, then map export.
    pub fn finish(mut self) -> Result<BackendOutputs> {
        if !self.global.graph().is_empty() {
            let t = Instant::now();
            self.global.optimize()?;
            self.times.global_map.push(t.elapsed().as_secs_f64());
        }
        let graph = self.global.into_graph();
        Ok(BackendOutputs {
            planner_log: self.planner_log,
            map: graph.export_map(),
            dead_reckoned_map: graph.dead_reckoned_map(),
            graph,
            map_to_world: self
                .first
                .and_then(|(ego, truth)| truth.map(|t| t.compose(&ego.inverse()))),
            times: self.times,
        })
    }
}

/// Scores maps and planner output against the true track.
pub fn evaluate(outputs: &BackendOutputs, track: &TrackDefinition, icp: &IcpConfig) -> EvalReport {
    let init = outputs.map_to_world.unwrap_or(Pose2::IDENTITY);
    let metric = |m: &[MapCone]| {
        if m.is_empty() {
            None
        } else {
            evaluate_map(m, track, &init, icp).ok()
        }
    };
    let samples: Vec<PlanningSample> = outputs
        .planner_log
        .iter()
        .filter_map(|o| o.true_pose.map(|t| PlanningSample { output: o, true_pose: t }))
        .collect();
    EvalReport {
        map: metric(&outputs.map),
        dead_reckoned_map: metric(&outputs.dead_reckoned_map),
        planning: planning_stats(&samples, track),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatus {
    pub completed_lap: bool,
    pub frames: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

pub struct RunOutputs {
    pub config: RunConfig,
    pub track: TrackDefinition,
    pub snapshots: Vec<SnapshotRecord>,
    pub backend: BackendOutputs,
    pub report: EvalReport,
    pub status: RunStatus,
}

/// Artifact file names inside a run directory.
pub mod files {
    pub const CONFIG: &str = "config.json";
    pub const TRACK: &str = "track.json";
    pub const SNAPSHOTS: &str = "snapshots.ndjson";
    pub const PLANNER: &str = "planner.ndjson";
    pub const GRAPH: &str = "graph.json";
    pub const MAP: &str = "map.json";
    pub const DEAD_RECKONED_MAP: &str = "map_dead_reckoned.json";
    pub const REPORT: &str = "report.json";
    pub const REPORT_SUMMARY_CSV: &str = "report_summary.csv";
    pub const REPORT_HISTOGRAM_CSV: &str = "report_histograms.csv";
    pub const TIMING: &str = "timing.json";
    pub const STATUS: &str = "status.json";
    pub const SELECTION_DIFFS: &str = "selection_diffs.json";
}

/// Writes planner, graph, maps, report and timing; shared by run and replay.
pub fn write_backend_outputs(dir: &Path, outputs: &BackendOutputs, report: Option<&EvalReport>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_ndjson_file(&dir.join(files::PLANNER), PLANNER_SCHEMA, &outputs.planner_log)?;
    io::write_json(&dir.join(files::GRAPH), &outputs.graph)?;
    io::write_json(&dir.join(files::MAP), &outputs.map)?;
    io::write_json(&dir.join(files::DEAD_RECKONED_MAP), &outputs.dead_reckoned_map)?;
    if let Some(r) = report {
        write_report(dir, r)?;
    }
    io::write_json(&dir.join(files::TIMING), &outputs.times.summary())?;
    Ok(())
}

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    io::write_json(&dir.join(files::REPORT), report)?;
    std::fs::write(dir.join(files::REPORT_SUMMARY_CSV), report.summary_csv())?;
    std::fs::write(dir.join(files::REPORT_HISTOGRAM_CSV), report.histogram_csv())?;
    Ok(())
}

impl RunOutputs {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_json(&dir.join(files::CONFIG), &self.config)?;
        io::write_json(&dir.join(files::TRACK), &self.track)?;
        io::write_ndjson_file(&dir.join(files::SNAPSHOTS), SNAPSHOT_SCHEMA, &self.snapshots)?;
        write_backend_outputs(dir, &self.backend, Some(&self.report))?;
        io::write_json(&dir.join(files::STATUS), &self.status)?;
        Ok(())
    }
}

/// Point `lookahead` meters along the polyline, or its end.
fn lookahead_point(polyline: &[Vector2<f64>], lookahead: f64) -> Vector2<f64> {
    let mut left = lookahead;
    for w in polyline.windows(2) {
        let d = (w[1] - w[0]).norm();
        if d >= left && d > 0.0 {
            return w[0] + (w[1] - w[0]) * (left / d);
        }
        left -= d;
    }
    *polyline.last().unwrap()
}

/// Exact constant-curvature motion over arc length `l`.
fn arc_step(pose: &Pose2, curvature: f64, l: f64) -> Pose2 {
    let dth = curvature * l;
    let (dx, dy) = if dth.abs() < 1e-9 {
        (l, 0.5 * curvature * l * l)
    } else {
        (dth.sin() / curvature, (1.0 - dth.cos()) / curvature)
    };
    pose.compose(&Pose2::new(dx, dy, dth))
}

fn pursuit_curvature(out: &PlannerOutput, lookahead: f64) -> f64 {
    if out.waypoints.is_empty() {
        return 0.0;
    }
    let poly: Vec<_> = std::iter::once(out.ego.translation()).chain(out.waypoint_vectors()).collect();
    let target = out.ego.inverse_transform_point(&lookahead_point(&poly, lookahead));
    let d2 = target.norm_squared();
    if d2 < 1e-9 {
        0.0
    } else {
        2.0 * target.y / d2
    }
}

/// Runs one lap; divergence in closed loop yields a failed status with partial outputs.
pub fn run(config: &RunConfig) -> Result<RunOutputs> {
    config.validate()?;
    let config = config.resolved();
    let track = config.load_track()?;
    let sim_run = SimRun {
        track: track.clone(),
        speed_profile: config.speed_profile.clone(),
        frame_rate_hz: config.frame_rate_hz,
        seed: config.seed,
        velocity_noise: config.velocity_noise,
        schedule: config.mode_schedule.clone(),
    };
    let mut sim = Simulator::new(&sim_run, &config.sensor_profiles)?;
    let mut local = LocalMap::new(config.local_map.clone());
    let mut monitor = ModeMonitor::new(config.local_map.staleness_s);
    let mut backend = Backend::new(config.planner.clone(), config.global_map.clone(), config.verbose_candidates);
    let mut snapshots = Vec::new();

    let line = track.centerline_path();
    let length = line.length();
    let end = length + config.run_out_m;
    let dt = 1.0 / config.frame_rate_hz;
    let mut prev = line.pose_at(0.0);
    let mut pose = prev;
    let mut progress = 0.0;
    let mut last_s = 0.0;
    let mut failure = None;
    let mut k = 0usize;

    loop {
        let t = k as f64 * dt;
        let step_dt = if k == 0 { 0.0 } else { dt };
        let t0 = Instant::now();
        let frame: SimFrame = sim.frame(t, step_dt, &prev, &pose);
        backend.times.simulation.push(t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        for m in &frame.messages {
            monitor.record(*m, t);
        }
        let (snapshot, _) = local.ingest_frame(&frame.observations, &frame.velocity, frame.dt, monitor.mode(t))?;
        backend.times.local_map.push(t1.elapsed().as_secs_f64());
        let record = SnapshotRecord {
            snapshot,
            true_pose: Some(frame.true_pose),
        };
        let out = backend.process(&record)?.clone();
        snapshots.push(record);
        k += 1;

        match &config.closed_loop {
            None => {
                progress += config.speed_profile.speed_at(progress % length) * dt;
                if progress >= end {
                    break;
                }
                prev = pose;
                pose = line.pose_at(progress);
            }
            Some(cl) => {
                let (s, dist) = line.project(&pose.translation());
                if dist > cl.max_deviation_m {
                    failure = Some(format!("left the track by {dist:.2} m at t = {t:.1} s"));
                    break;
                }
                let mut ds = s - last_s;
                if ds > length / 2.0 {
                    ds -= length;
                } else if ds < -length / 2.0 {
                    ds += length;
                }
                progress += ds;
                last_s = s;
                if progress >= end {
                    break;
                }
                if t > cl.max_duration_s {
                    failure = Some(format!("no lap completed within {} s", cl.max_duration_s));
                    break;
                }
                let v = config.speed_profile.speed_at(progress.max(0.0) % length);
                prev = pose;
                pose = arc_step(&pose, pursuit_curvature(&out, cl.lookahead_m), v * dt);
            }
        }
    }

    let backend = backend.finish()?;
    let report = evaluate(&backend, &track, &config.icp);
    Ok(RunOutputs {
        status: RunStatus {
            completed_lap: failure.is_none(),
            frames: snapshots.len(),
            failure,
        },
        config,
        track,
        snapshots,
        backend,
        report,
    })
}

/// Re-runs planner and global map on recorded snapshots.
pub fn replay(records: &[SnapshotRecord], planner: &PlannerConfig, global: &GlobalMapConfig, verbose: bool) -> Result<BackendOutputs> {
    let mut backend = Backend::new(planner.clone(), global.clone(), verbose);
    for r in records {
        backend.process(r)?;
    }
    backend.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub candidate: usize,
    pub d_log_prior: f64,
    pub d_log_likelihood: f64,
    pub d_log_posterior: f64,
}

/// A snapshot where two planner logs selected different paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDiff {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub baseline: Option<CandidateScore>,
    pub current: Option<CandidateScore>,
    /// Per-candidate score changes, when both logs carry verbose candidates.
    pub candidate_deltas: Vec<ScoreDelta>,
}

pub fn compare_planner_logs(baseline: &[PlannerOutput], current: &[PlannerOutput]) -> Vec<SelectionDiff> {
    baseline
        .iter()
        .zip(current)
        .filter(|(a, b)| a.waypoints != b.waypoints)
        .map(|(a, b)| SelectionDiff {
            timestamp: b.timestamp,
            baseline: a.selected.clone(),
            current: b.selected.clone(),
            candidate_deltas: match (&a.candidates, &b.candidates) {
                (Some(x), Some(y)) => x
                    .iter()
                    .zip(y)
                    .enumerate()
                    .map(|(i, (x, y))| ScoreDelta {
                        candidate: i,
                        d_log_prior: y.log_prior - x.log_prior,
                        d_log_likelihood: y.log_likelihood - x.log_likelihood,
                        d_log_posterior: y.log_posterior - x.log_posterior,
                    })
                    .collect(),
                _ => Vec::new(),
            },
        })
        .collect()
}
