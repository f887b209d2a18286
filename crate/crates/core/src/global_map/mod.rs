//! Global cone map from pose-landmark graph optimization.

mod graph;
pub mod residuals;
pub mod skyline;
mod solver;

pub use graph::{
    add_snapshot, AddSummary, Graph, LandmarkNode, MapCone, NodeId, ObservationEdge, OdometryEdge, PoseNode,
};
pub use solver::{optimize, OptimizeOutcome, SolverConfig};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::Pose2;
use crate::local_map::LocalMapSnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalMapConfig {
    /// Only cones this close to the ego enter the graph.
    pub r_add_m: f64,
    /// Euclidean association radius against existing landmarks.
    pub d_assoc_m: f64,
    /// Untracked landmarks this close to a new cone are loop-closure candidates.
    pub loop_radius_m: f64,
    /// Agreeing loop-closure candidates needed before correcting for drift.
    pub min_loop_matches: usize,
    /// Local cones detected in fewer frames are left out of the graph.
    pub min_hits: u32,
    /// Odometry covariance growth per second for (x, y, θ). Hand tuned.
    pub odometry_cov_per_s: [f64; 3],
    pub min_odometry_dt_s: f64,
    pub min_observation_sigma_m: f64,
    /// Re-optimize after this many snapshots; 0 disables incremental runs.
    pub optimize_every: usize,
    pub solver: SolverConfig,
}

impl Default for GlobalMapConfig {
    fn default() -> Self {
        GlobalMapConfig {
            r_add_m: 8.0,
            d_assoc_m: 1.5,
            min_hits: 2,
            loop_radius_m: 2.5,
            min_loop_matches: 2,
            odometry_cov_per_s: [1e-4, 1e-4, 1e-6],
            min_odometry_dt_s: 1e-3,
            min_observation_sigma_m: 0.02,
            optimize_every: 10,
            solver: SolverConfig::default(),
        }
    }
}

/// Incremental builder around [`Graph`] with a re-optimization cadence.
#[derive(Debug, Clone)]
pub struct GlobalMap {
    config: GlobalMapConfig,
    graph: Graph,
    since_optimize: usize,
    last_outcome: Option<OptimizeOutcome>,
}

impl GlobalMap {
    pub fn new(config: GlobalMapConfig) -> Self {
        GlobalMap {
            config,
            graph: Graph::default(),
            since_optimize: 0,
            last_outcome: None,
        }
    }

    pub fn config(&self) -> &GlobalMapConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn last_outcome(&self) -> Option<&OptimizeOutcome> {
        self.last_outcome.as_ref()
    }

    /// Adds a snapshot and re-optimizes when the cadence is due.
    pub fn add_snapshot(&mut self, snapshot: &LocalMapSnapshot, odom: &Pose2) -> Result<AddSummary> {
        let summary = add_snapshot(&mut self.graph, snapshot, odom, &self.config)?;
        self.since_optimize += 1;
        if self.config.optimize_every > 0 && self.since_optimize >= self.config.optimize_every {
            self.optimize()?;
        }
        Ok(summary)
    }

    pub fn optimize(&mut self) -> Result<&OptimizeOutcome> {
        let outcome = optimize(&self.graph, &self.config.solver)?;
        self.graph.apply(&outcome);
        self.since_optimize = 0;
        Ok(self.last_outcome.insert(outcome))
    }

    pub fn export_map(&self) -> Vec<MapCone> {
        self.graph.export_map()
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }
}
