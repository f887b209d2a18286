//! Cone mapping and middle-path planning for autonomous racing.
//!
//! Frames from a simulated perception stack feed a filtered local map; its
//! snapshots drive a Bayesian path planner and a pose-landmark graph whose
//! optimized landmarks form the global map.

pub mod color;
pub mod cone;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod geometry;
pub mod global_map;
pub mod io;
pub mod local_map;
pub mod pipeline;
pub mod planner;
pub mod sim;

pub use color::{ColorClass, ColorDistribution, ConeColor};
pub use cone::{ConeEstimate, ConeId, ConeObservation, SensorSource};
pub use error::{Error, Result};
pub use gaussian::Gaussian2;
pub use geometry::{Pose2, Velocity2};
pub use global_map::{GlobalMap, GlobalMapConfig, Graph, MapCone};
pub use local_map::{LocalMap, LocalMapConfig, LocalMapSnapshot, MapMode};
pub use pipeline::{run, RunConfig, RunOutputs};
pub use planner::{CandidatePath, PlannerConfig, PlannerOutput, Triangulation};
pub use sim::{SensorProfile, TrackDefinition, TrackSpec};
