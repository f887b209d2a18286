//! Middle-path planning over a local-map snapshot.

pub mod delaunay;
mod score;
mod search;
#[cfg(test)]
mod tests;

pub use delaunay::{triangulate, Triangulation};
pub use score::{
    color_factor, compute_features, log_likelihood, log_prior, population_std, FeatureTerm, Features, PriorConfig, Side,
};
pub use search::{enumerate_paths, score_path, select_path, start_triangle, CandidatePath, PlanningInput, SearchLimits};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeEstimate, ConeId};
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::local_map::LocalMapSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Cones below this existence are ignored.
    pub min_existence: f64,
    /// Cones detected in fewer frames are ignored.
    pub min_hits: u32,
    pub planning_radius_m: f64,
    /// Cones further than this behind the ego are ignored.
    pub max_behind_m: f64,
    /// Of two cones closer than this, only the more certain one is kept.
    pub merge_radius_m: f64,
    pub limits: SearchLimits,
    pub prior: PriorConfig,
    pub p_floor: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let limits = SearchLimits::default();
        PlannerConfig {
            min_existence: 0.3,
            min_hits: 1,
            planning_radius_m: 25.0,
            max_behind_m: 5.0,
            merge_radius_m: 0.5,
            prior: PriorConfig::for_limits(limits.max_length_m, 8),
            limits,
            p_floor: 1e-6,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate().map_err(Error::InvalidConfig)?;
        if !(self.p_floor > 0.0 && self.p_floor <= 1.0) {
            return Err(Error::InvalidConfig("p_floor must be in (0, 1]".into()));
        }
        if self.limits.max_edges == 0 || !(self.limits.max_length_m > 0.0) || !(self.limits.max_edge_length_m > 0.0) {
            return Err(Error::InvalidConfig("search limits must be positive".into()));
        }
        if self.limits.beam_width == Some(0) {
            return Err(Error::InvalidConfig("beam width must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the planner derived from one snapshot.
#[derive(Debug, Clone)]
pub struct Plan {
    pub ego: Pose2,
    pub cone_ids: Vec<ConeId>,
    pub input: PlanningInput,
    pub candidates: Vec<CandidatePath>,
    pub selected: Option<usize>,
}

impl Plan {
    pub fn best(&self) -> Option<&CandidatePath> {
        self.selected.map(|i| &self.candidates[i])
    }
}

/// Cones of `snapshot` the planner considers, with their ids.
pub fn planning_input(snapshot: &LocalMapSnapshot, config: &PlannerConfig) -> (Vec<ConeId>, PlanningInput) {
    let mut kept: Vec<&ConeEstimate> = snapshot
        .cones
        .iter()
        .filter(|c| {
            let local = snapshot.ego.inverse_transform_point(&c.position.mean);
            c.existence >= config.min_existence
                && c.hits >= config.min_hits
                && local.norm() <= config.planning_radius_m && local.x >= -config.max_behind_m
        })
        .collect();
    // Transient duplicates of one physical cone would otherwise create sliver triangles.
    kept.sort_by(|a, b| b.existence.total_cmp(&a.existence).then(a.id.cmp(&b.id)));
    let r2 = config.merge_radius_m * config.merge_radius_m;
    let mut chosen: Vec<&ConeEstimate> = Vec::new();
    for c in kept {
        if chosen.iter().all(|k| (k.position.mean - c.position.mean).norm_squared() >= r2) {
            chosen.push(c);
        }
    }
    chosen.sort_by_key(|c| c.id);
    let input = PlanningInput {
        positions: chosen.iter().map(|c| c.position.mean).collect(),
        colors: chosen.iter().map(|c| c.color).collect(),
    };
    (chosen.iter().map(|c| c.id).collect(), input)
}

pub fn plan(snapshot: &LocalMapSnapshot, config: &PlannerConfig) -> Plan {
    let (cone_ids, input) = planning_input(snapshot, config);
    let candidates = match triangulate(&input.positions) {
        Ok(tri) => enumerate_paths(&tri, &input, &snapshot.ego, &config.limits, &config.prior, config.p_floor),
        Err(_) => Vec::new(),
    };
    let selected = select_path(&candidates);
    Plan {
        ego: snapshot.ego,
        cone_ids,
        input,
        candidates,
        selected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub log_posterior: f64,
    pub features: Features,
    pub edges: usize,
    pub length_m: f64,
}

impl From<&CandidatePath> for CandidateScore {
    fn from(c: &CandidatePath) -> Self {
        CandidateScore {
            log_prior: c.log_prior,
            log_likelihood: c.log_likelihood,
            log_posterior: c.log_posterior,
            features: c.features,
            edges: c.crossed_edges.len(),
            length_m: c.length(),
        }
    }
}

/// Per-snapshot planner record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub ego: Pose2,
    #[serde(rename = "waypoints_m")]
    pub waypoints: Vec<[f64; 2]>,
    pub left_cone_ids: Vec<ConeId>,
    pub right_cone_ids: Vec<ConeId>,
    pub candidate_count: usize,
    pub selected: Option<CandidateScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<CandidateScore>>,
    /// Simulator ground truth carried along for evaluation only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_pose: Option<Pose2>,
}

impl PlannerOutput {
    pub fn from_plan(timestamp: f64, plan: &Plan, verbose: bool) -> Self {
        let best = plan.best();
        let ids = |v: &[usize]| v.iter().map(|&i| plan.cone_ids[i]).collect();
        PlannerOutput {
            timestamp,
            ego: plan.ego,
            waypoints: best.map_or(Vec::new(), |b| b.waypoints.iter().map(|w| [w.x, w.y]).collect()),
            left_cone_ids: best.map_or(Vec::new(), |b| ids(&b.left_cones)),
            right_cone_ids: best.map_or(Vec::new(), |b| ids(&b.right_cones)),
            candidate_count: plan.candidates.len(),
            selected: best.map(CandidateScore::from),
            candidates: verbose.then(|| plan.candidates.iter().map(CandidateScore::from).collect()),
            true_pose: None,
        }
    }

    pub fn waypoint_vectors(&self) -> Vec<Vector2<f64>> {
        self.waypoints.iter().map(|w| Vector2::new(w[0], w[1])).collect()
    }

    /// Length of the ego-rooted path polyline.
    pub fn path_length(&self) -> f64 {
        let mut last = self.ego.translation();
        let mut len = 0.0;
        for w in self.waypoint_vectors() {
            len += (w - last).norm();
            last = w;
        }
        len
    }
}
