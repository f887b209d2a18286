use std::collections::BTreeSet;

use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::color::{ColorClass, ColorDistribution};
use crate::cone::ConeId;
use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::local_map::LocalMapSnapshot;

use super::GlobalMapConfig;

pub type NodeId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseNode {
    pub id: NodeId,
    #[serde(rename = "timestamp_s")]
    pub timestamp: f64,
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkNode {
    pub id: NodeId,
    #[serde(rename = "position_m")]
    pub position: Vector2<f64>,
    pub color: ColorDistribution,
    pub local_id_links: BTreeSet<ConeId>,
    /// Latest color evidence reported by each linked local cone.
    pub link_evidence: Vec<(ConeId, [f64; 3])>,
    /// Pose node that first observed the landmark; drives variable ordering.
    pub created_at: NodeId,
}

impl LandmarkNode {
    fn record_evidence(&mut self, local: ConeId, evidence: [f64; 3]) {
        match self.link_evidence.iter_mut().find(|(id, _)| *id == local) {
            Some(slot) => slot.1 = evidence,
            None => self.link_evidence.push((local, evidence)),
        }
        let mut sum = [0.0; 3];
        for (_, e) in &self.link_evidence {
            for k in 0..3 {
                sum[k] += e[k];
            }
        }
        self.color = ColorDistribution::from_weights(sum);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdometryEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub relative: Pose2,
    pub information: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEdge {
    pub pose: NodeId,
    pub landmark: NodeId,
    #[serde(rename = "measurement_m")]
    pub measurement: Vector2<f64>,
    pub information: Matrix2<f64>,
}

/// Pose-landmark graph. Pose and landmark ids are dense indices into their
/// vectors and share no namespace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub poses: Vec<PoseNode>,
    pub landmarks: Vec<LandmarkNode>,
    pub odometry: Vec<OdometryEdge>,
    pub observations: Vec<ObservationEdge>,
}

/// What a single [`add_snapshot`] call changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AddSummary {
    pub pose: NodeId,
    pub new_landmarks: Vec<NodeId>,
    pub observation_edges: usize,
    pub skipped_far: usize,
    pub skipped_conflict: usize,
    pub skipped_unconfirmed: usize,
    /// New cones held back because they might re-observe an old landmark.
    pub deferred: usize,
    /// Drift correction applied to unlinked cones, if one was found.
    pub loop_correction: Option<Vector2<f64>>,
}

/// One cone of an exported map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCone {
    #[serde(rename = "x_m", alias = "x")]
    pub x: f64,
    #[serde(rename = "y_m", alias = "y")]
    pub y: f64,
    pub color: ColorClass,
    pub id: NodeId,
}

impl MapCone {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

impl Graph {
    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn pose(&self, id: NodeId) -> Option<&PoseNode> {
        self.poses.get(id as usize)
    }

    pub fn landmark(&self, id: NodeId) -> Option<&LandmarkNode> {
        self.landmarks.get(id as usize)
    }

    fn landmark_for_local(&self, local: ConeId) -> Option<NodeId> {
        self.landmarks
            .iter()
            .find(|l| l.local_id_links.contains(&local))
            .map(|l| l.id)
    }

    fn nearest_landmark(&self, p: &Vector2<f64>) -> Option<(NodeId, f64)> {
        self.landmarks
            .iter()
            .map(|l| (l.id, (l.position - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Checks that every edge references existing nodes with consistent ids.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (i, p) in self.poses.iter().enumerate() {
            if p.id != i as NodeId {
                return bad(format!("pose id {} at index {i}", p.id));
            }
        }
        for (i, l) in self.landmarks.iter().enumerate() {
            if l.id != i as NodeId {
                return bad(format!("landmark id {} at index {i}", l.id));
            }
        }
        for e in &self.odometry {
            if e.from >= e.to || e.to as usize >= self.poses.len() {
                return bad(format!("odometry edge {} -> {}", e.from, e.to));
            }
        }
        for e in &self.observations {
            if e.pose as usize >= self.poses.len() || e.landmark as usize >= self.landmarks.len() {
                return bad(format!("observation edge {} -> {}", e.pose, e.landmark));
            }
        }
        Ok(())
    }

    /// Current estimates as an exported map.
    pub fn export_map(&self) -> Vec<MapCone> {
        self.landmarks
            .iter()
            .map(|l| MapCone {
                x: l.position.x,
                y: l.position.y,
                color: l.color.argmax(),
                id: l.id,
            })
            .collect()
    }

    /// Map obtained without optimization: poses chained from the first by
    /// odometry, each landmark the mean of its projected observations.
    pub fn dead_reckoned_map(&self) -> Vec<MapCone> {
        let poses = self.dead_reckoned_poses();
        let mut sums = vec![(Vector2::zeros(), 0usize); self.landmarks.len()];
        for e in &self.observations {
            let s = &mut sums[e.landmark as usize];
            s.0 += poses[e.pose as usize].transform_point(&e.measurement);
            s.1 += 1;
        }
        self.landmarks
            .iter()
            .zip(sums)
            .map(|(l, (sum, n))| {
                let p = if n > 0 { sum / n as f64 } else { l.position };
                MapCone { x: p.x, y: p.y, color: l.color.argmax(), id: l.id }
            })
            .collect()
    }

    pub fn dead_reckoned_poses(&self) -> Vec<Pose2> {
        let mut out: Vec<Pose2> = self.poses.iter().map(|p| p.pose).collect();
        for e in &self.odometry {
            out[e.to as usize] = out[e.from as usize].compose(&e.relative);
        }
        out
    }
}

/// Appends one snapshot: a pose node, its odometry edge, and observation
/// edges for proximal cones matched in the snapshot's frame.
pub fn add_snapshot(
    graph: &mut Graph,
    snapshot: &LocalMapSnapshot,
    odom: &Pose2,
    config: &GlobalMapConfig,
) -> Result<AddSummary> {
    let id = graph.poses.len() as NodeId;
    let pose = match graph.poses.last() {
        Some(prev) => {
            if !(snapshot.timestamp >= prev.timestamp) {
                return Err(Error::OutOfOrderSnapshot {
                    last: prev.timestamp,
                    got: snapshot.timestamp,
                });
            }
            let dt = (snapshot.timestamp - prev.timestamp).max(config.min_odometry_dt_s);
            let cov = Matrix3::from_diagonal(&config.odometry_cov_per_s.into()) * dt;
            let information = cov.try_inverse().ok_or(Error::NotPositiveDefinite)?;
            graph.odometry.push(OdometryEdge {
                from: prev.id,
                to: id,
                relative: *odom,
                information,
            });
            prev.pose.compose(odom)
        }
        None => snapshot.ego,
    };
    graph.poses.push(PoseNode {
        id,
        timestamp: snapshot.timestamp,
        pose,
    });

    let mut summary = AddSummary {
        pose: id,
        ..Default::default()
    };
    let min_var = config.min_observation_sigma_m.powi(2);
    let ego = snapshot.ego;
    let mut near = Vec::new();
    for &local in &snapshot.observed_ids {
        let Some(cone) = snapshot.cone(local) else { continue };
        if cone.hits < config.min_hits {
            summary.skipped_unconfirmed += 1;
            continue;
        }
        if (cone.position.mean - ego.translation()).norm() > config.r_add_m {
            summary.skipped_far += 1;
            continue;
        }
        let z = ego.inverse_transform_point(&cone.position.mean);
        near.push((local, cone, z, pose.transform_point(&z)));
    }

    // Landmarks the local map no longer tracks can only be re-found through
    // accumulated drift, so estimate that drift from all of them at once.
    let tracked: BTreeSet<NodeId> = snapshot.cones.iter().filter_map(|c| graph.landmark_for_local(c.id)).collect();
    let nearest_untracked = |g: &Graph, p: &Vector2<f64>| {
        g.landmarks
            .iter()
            .filter(|l| !tracked.contains(&l.id) && l.created_at != id)
            .map(|l| (l.id, (l.position - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .filter(|(_, d)| *d <= config.loop_radius_m)
    };
    let offsets: Vec<Vector2<f64>> = near
        .iter()
        .filter(|c| graph.landmark_for_local(c.0).is_none())
        .filter_map(|c| nearest_untracked(graph, &c.3).map(|(l, _)| graph.landmarks[l as usize].position - c.3))
        .collect();
    let correction = consistent_offset(&offsets, config.min_loop_matches, 0.5 * config.d_assoc_m);
    summary.loop_correction = correction;

    let mut used = BTreeSet::new();
    for (local, cone, z, world) in near {
        let landmark = match graph.landmark_for_local(local) {
            Some(l) => Some(l),
            None => {
                let world = world + correction.unwrap_or_else(Vector2::zeros);
                match graph.nearest_landmark(&world) {
                    Some((l, d)) if d <= config.d_assoc_m => {
                        if used.contains(&l) {
                            None
                        } else {
                            graph.landmarks[l as usize].local_id_links.insert(local);
                            Some(l)
                        }
                    }
                    _ if correction.is_none() && nearest_untracked(graph, &world).is_some() => {
                        // Probably a drifted re-observation; wait for more evidence.
                        summary.deferred += 1;
                        continue;
                    }
                    _ => {
                        let l = graph.landmarks.len() as NodeId;
                        graph.landmarks.push(LandmarkNode {
                            id: l,
                            position: world,
                            color: ColorDistribution::UNIFORM,
                            local_id_links: BTreeSet::from([local]),
                            link_evidence: Vec::new(),
                            created_at: id,
                        });
                        summary.new_landmarks.push(l);
                        Some(l)
                    }
                }
            }
        };
        let Some(l) = landmark.filter(|l| used.insert(*l)) else {
            summary.skipped_conflict += 1;
            continue;
        };
        graph.landmarks[l as usize].record_evidence(local, cone.color_evidence);

        let var = (cone.position.cov.trace() / 2.0).max(min_var);
        graph.observations.push(ObservationEdge {
            pose: id,
            landmark: l,
            measurement: z,
            information: Matrix2::identity() / var,
        });
        summary.observation_edges += 1;
    }
    Ok(summary)
}

/// Robust mean of `offsets`: the ones within `tol` of the component-wise
/// median, if at least `min_count` of them agree.
fn consistent_offset(offsets: &[Vector2<f64>], min_count: usize, tol: f64) -> Option<Vector2<f64>> {
    if offsets.len() < min_count.max(1) {
        return None;
    }
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let m = Vector2::new(
        median(offsets.iter().map(|o| o.x).collect()),
        median(offsets.iter().map(|o| o.y).collect()),
    );
    let kept: Vec<_> = offsets.iter().filter(|o| (*o - m).norm() <= tol).collect();
    if kept.len() < min_count.max(1) {
        return None;
    }
    Some(kept.iter().copied().sum::<Vector2<f64>>() / kept.len() as f64)
}
