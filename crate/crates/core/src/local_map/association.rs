//! Greedy one-to-one data association by Bhattacharyya distance.

use crate::cone::{ConeEstimate, ConeId};
use crate::gaussian::{bhattacharyya_distance, Gaussian2};

/// Outcome of matching one frame. Within a single sensor batch every cone id
/// appears at most once in `pairs`; in degraded mode the LiDAR and camera
/// batches are matched separately, so a cone may be paired once per sensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationResult {
    /// (observation index, cone id)
    pub pairs: Vec<(usize, ConeId)>,
    pub new_observations: Vec<usize>,
    pub unmatched_cones_in_fov: Vec<ConeId>,
}

/// Matches map-frame observations to cones. Candidate pairs under `gate`
/// are accepted in ascending distance; ties go to the lower cone id.
pub fn associate(cones: &[ConeEstimate], observations: &[Gaussian2], gate: f64) -> AssociationResult {
    let mut candidates: Vec<(f64, ConeId, usize)> = Vec::new();
    for (oi, obs) in observations.iter().enumerate() {
        for cone in cones {
            if let Ok(d) = bhattacharyya_distance(&cone.position, obs) {
                if d < gate {
                    candidates.push((d, cone.id, oi));
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut obs_used = vec![false; observations.len()];
    let mut cone_used: Vec<ConeId> = Vec::new();
    let mut pairs = Vec::new();
    for (_, id, oi) in candidates {
        if obs_used[oi] || cone_used.contains(&id) {
            continue;
        }
        obs_used[oi] = true;
        cone_used.push(id);
        pairs.push((oi, id));
    }
    pairs.sort_unstable();
    let new_observations = (0..observations.len()).filter(|&i| !obs_used[i]).collect();
    AssociationResult {
        pairs,
        new_observations,
        unmatched_cones_in_fov: Vec::new(),
    }
}
