//! Operating mode selection from pipeline heartbeats.

use serde::{Deserialize, Serialize};

use crate::cone::SensorSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    Fusion,
    LidarOnly,
    CameraOnly,
    /// Fusion is down but both single-sensor pipelines are up.
    Degraded,
}

impl MapMode {
    pub const ALL: [MapMode; 4] = [
        MapMode::Fusion,
        MapMode::Degraded,
        MapMode::LidarOnly,
        MapMode::CameraOnly,
    ];

    /// Sources whose observations update the map, in processing order.
    pub fn sources(self) -> &'static [SensorSource] {
        match self {
            MapMode::Fusion => &[SensorSource::Fusion],
            MapMode::LidarOnly => &[SensorSource::LidarOnly],
            MapMode::CameraOnly => &[SensorSource::CameraOnly],
            MapMode::Degraded => &[SensorSource::LidarOnly, SensorSource::CameraOnly],
        }
    }
}

/// Declares a pipeline failed once its last message is older than the threshold.
#[derive(Debug, Clone)]
pub struct ModeMonitor {
    staleness_s: f64,
    last: [Option<f64>; 3],
}

fn slot(s: SensorSource) -> usize {
    match s {
        SensorSource::Fusion => 0,
        SensorSource::LidarOnly => 1,
        SensorSource::CameraOnly => 2,
    }
}

impl ModeMonitor {
    pub fn new(staleness_s: f64) -> Self {
        ModeMonitor {
            staleness_s,
            last: [None; 3],
        }
    }

    pub fn record(&mut self, source: SensorSource, t: f64) {
        self.last[slot(source)] = Some(t);
    }

    pub fn alive(&self, source: SensorSource, now: f64) -> bool {
        self.last[slot(source)].is_some_and(|t| now - t <= self.staleness_s)
    }

    /// Falls back to the last-resort camera mode when nothing is alive.
    pub fn mode(&self, now: f64) -> MapMode {
        let f = self.alive(SensorSource::Fusion, now);
        let l = self.alive(SensorSource::LidarOnly, now);
        let c = self.alive(SensorSource::CameraOnly, now);
        match (f, l, c) {
            (true, _, _) => MapMode::Fusion,
            (false, true, true) => MapMode::Degraded,
            (false, true, false) => MapMode::LidarOnly,
            _ => MapMode::CameraOnly,
        }
    }
}
