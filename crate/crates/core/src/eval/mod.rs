//! Map accuracy and planning robustness metrics.

mod corridor;
mod icp;

pub use corridor::{point_in_polygon, segment_intersection, Corridor};
pub use icp::{icp_align, map_rmse, match_points, rigid_fit, AlignmentResult, IcpConfig};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Pose2;
use crate::global_map::MapCone;
use crate::planner::PlannerOutput;
use crate::sim::TrackDefinition;

/// Histogram bins are 1 m wide; the last bin collects everything from 15 m on.
pub const HISTOGRAM_BINS: usize = 16;

pub fn length_bin(meters: f64) -> usize {
    ((meters + 1e-9).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningStats {
    pub frames: usize,
    pub frames_without_path: usize,
    /// Fraction of frames per path-length bin; frames without a path count as 0 m.
    pub path_length_histogram: Vec<f64>,
    /// Fraction of frames whose path first leaves the track in each distance bin.
    pub out_of_track_histogram: Vec<f64>,
}

impl PlanningStats {
    pub fn out_of_track_within(&self, meters: usize) -> f64 {
        self.out_of_track_histogram.iter().take(meters).sum()
    }

    pub fn max_bin_fraction(&self) -> f64 {
        self.path_length_histogram.last().copied().unwrap_or(0.0)
    }
}

/// One planner record paired with the true pose of the car at that time.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanningSample<'a> {
    pub output: &'a PlannerOutput,
    pub true_pose: Pose2,
}

/// Maps a planner path into the world frame via the true pose.
pub fn world_polyline(output: &PlannerOutput, true_pose: &Pose2) -> Vec<Vector2<f64>> {
    let to_world = true_pose.compose(&output.ego.inverse());
    std::iter::once(true_pose.translation())
        .chain(output.waypoint_vectors().iter().map(|w| to_world.transform_point(w)))
        .collect()
}

pub fn planning_stats(samples: &[PlanningSample], truth: &TrackDefinition) -> PlanningStats {
    let corridor = Corridor::from_track(truth);
    let mut lengths = vec![0usize; HISTOGRAM_BINS];
    let mut exits = vec![0usize; HISTOGRAM_BINS];
    let mut without = 0;
    for s in samples {
        if s.output.waypoints.is_empty() {
            without += 1;
            lengths[0] += 1;
            continue;
        }
        lengths[length_bin(s.output.path_length())] += 1;
        if let Some(d) = corridor.first_exit(&world_polyline(s.output, &s.true_pose)) {
            exits[length_bin(d)] += 1;
        }
    }
    let n = samples.len();
    let frac = |v: Vec<usize>| -> Vec<f64> {
        if n == 0 {
            Vec::new()
        } else {
            v.into_iter().map(|c| c as f64 / n as f64).collect()
        }
    };
    PlanningStats {
        frames: n,
        frames_without_path: without,
        path_length_histogram: frac(lengths),
        out_of_track_histogram: frac(exits),
    }
}

/// Nearest-rank percentile, `q` in [0, 1].
pub fn percentile(samples: &[f64], q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, x, _) = v.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    Some(*x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub stage: String,
    pub samples: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    pub fn from_seconds(stage: &str, seconds: &[f64]) -> Option<Self> {
        let ms: Vec<f64> = seconds.iter().map(|s| s * 1e3).collect();
        let p = |q| percentile(&ms, q);
        Some(TimingStats {
            stage: stage.to_string(),
            samples: ms.len(),
            mean_ms: ms.iter().sum::<f64>() / ms.len().max(1) as f64,
            p50_ms: p(0.5)?,
            p90_ms: p(0.9)?,
            p99_ms: p(0.99)?,
            max_ms: p(1.0)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetrics {
    pub rmse_m: f64,
    pub matched: usize,
    pub unmatched_estimated: usize,
    pub unmatched_truth: usize,
    pub rotation_rad: f64,
    pub translation_m: [f64; 2],
}

impl MapMetrics {
    pub fn from_alignment(a: &AlignmentResult) -> Self {
        MapMetrics {
            rmse_m: a.rmse_m,
            matched: a.correspondences.len(),
            unmatched_estimated: a.unmatched_estimated,
            unmatched_truth: a.unmatched_truth,
            rotation_rad: a.rotation_rad,
            translation_m: a.translation_m,
        }
    }
}

/// Aligns an exported map to the true cones and scores it.
pub fn evaluate_map(map: &[MapCone], truth: &TrackDefinition, init: &Pose2, config: &IcpConfig) -> Result<MapMetrics> {
    let est: Vec<_> = map.iter().map(|c| c.position()).collect();
    let gt: Vec<_> = truth.cones.iter().map(|c| c.position()).collect();
    Ok(MapMetrics::from_alignment(&icp_align(&est, &gt, init, config)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: Option<MapMetrics>,
    pub dead_reckoned_map: Option<MapMetrics>,
    pub planning: PlanningStats,
}

impl EvalReport {
    /// Histogram table, one row per 1 m bin.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_start_m,path_length_fraction,out_of_track_fraction\n");
        for i in 0..self.planning.path_length_histogram.len() {
            out.push_str(&format!(
                "{i},{},{}\n",
                self.planning.path_length_histogram[i], self.planning.out_of_track_histogram[i]
            ));
        }
        out
    }

    /// Single-row summary table.
    pub fn summary_csv(&self) -> String {
        let m = |m: &Option<MapMetrics>| {
            m.as_ref().map_or(",,,".to_string(), |m| {
                format!("{},{},{},{}", m.rmse_m, m.matched, m.unmatched_estimated, m.unmatched_truth)
            })
        };
        format!(
            "map_rmse_m,matched,unmatched_estimated,unmatched_truth,dead_reckoned_rmse_m,dr_matched,dr_unmatched_estimated,dr_unmatched_truth,frames,frames_without_path,max_length_fraction,out_of_track_within_5m\n{},{},{},{},{},{}\n",
            m(&self.map),
            m(&self.dead_reckoned_map),
            self.planning.frames,
            self.planning.frames_without_path,
            self.planning.max_bin_fraction(),
            self.planning.out_of_track_within(5),
        )
    }
}
