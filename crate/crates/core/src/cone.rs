use serde::{Deserialize, Serialize};

use crate::color::ColorDistribution;
use crate::gaussian::Gaussian2;

/// Perception pipeline that produced an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorSource {
    Fusion,
    LidarOnly,
    CameraOnly,
}

impl SensorSource {
    pub const ALL: [SensorSource; 3] = [
        SensorSource::Fusion,
        SensorSource::LidarOnly,
        SensorSource::CameraOnly,
    ];
}

/// A single detection in the car frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeObservation {
    pub position: Gaussian2,
    pub color: ColorDistribution,
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub source: SensorSource,
}

pub type ConeId = u64;

/// A filtered landmark held by the local map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeEstimate {
    pub id: ConeId,
    pub position: Gaussian2,
    pub color: ColorDistribution,
    pub color_evidence: [f64; 3],
    pub existence: f64,
    #[serde(rename = "last_seen_s")]
    pub last_seen: f64,
    /// Frames in which the cone was detected.
    #[serde(default)]
    pub hits: u32,
}

impl ConeEstimate {
    pub fn new(id: ConeId, position: Gaussian2, existence: f64, time: f64) -> Self {
        ConeEstimate {
            id,
            position,
            color: ColorDistribution::UNIFORM,
            color_evidence: [0.0; 3],
            existence: existence.clamp(0.0, 1.0),
            last_seen: time,
            hits: 0,
        }
    }
}
