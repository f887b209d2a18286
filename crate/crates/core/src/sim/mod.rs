//! Synthetic tracks and perception for desk-scale experiments.

pub mod scenario;
pub mod sensor;
pub mod track;

pub use scenario::{
    run_scenario, ModeSchedule, Pipeline, ScheduleEvent, SimFrame, SimRun, Simulator, SpeedKnot,
    SpeedProfile,
};
pub use sensor::{
    noisy_velocity, observe_cones, sample_color, OdometryBias, PositionNoise, RangeBin, SensorProfile,
    VelocityNoise,
};
pub use track::{generate_track, Centerline, RuleLimits, TrackCone, TrackDefinition, TrackSpec};
