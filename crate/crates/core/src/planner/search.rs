//! Candidate middle paths through the triangulation.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::delaunay::Triangulation;
use super::score::{better, compute_features, log_likelihood, log_prior, Features, PriorConfig, Side};
use crate::color::ColorDistribution;
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchLimits {
    pub max_edges: usize,
    pub max_length_m: f64,
    /// Open paths kept per depth; `None` searches exhaustively.
    pub beam_width: Option<usize>,
    /// The start triangle is the one whose centroid is nearest this far ahead of the ego.
    pub probe_distance_m: f64,
    /// Edges longer than this are boundaries the path may not cross.
    pub max_edge_length_m: f64,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            max_edges: 30,
            max_length_m: 15.0,
            beam_width: Some(300),
            probe_distance_m: 1.0,
            max_edge_length_m: 7.5,
        }
    }
}

/// Cones visible to the planner, in a fixed order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanningInput {
    pub positions: Vec<Vector2<f64>>,
    pub colors: Vec<ColorDistribution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePath {
    pub waypoints: Vec<Vector2<f64>>,
    /// Crossed edges as input cone indices, ordered along the path.
    pub crossed_edges: Vec<(usize, usize)>,
    pub left_cones: Vec<usize>,
    pub right_cones: Vec<usize>,
    pub features: Features,
    pub log_prior: f64,
    pub log_likelihood: f64,
    pub log_posterior: f64,
}

impl CandidatePath {
    fn empty() -> Self {
        CandidatePath {
            waypoints: Vec::new(),
            crossed_edges: Vec::new(),
            left_cones: Vec::new(),
            right_cones: Vec::new(),
            features: [0.0; 6],
            log_prior: 0.0,
            log_likelihood: 0.0,
            log_posterior: 0.0,
        }
    }

    /// Ego position followed by the waypoints.
    pub fn polyline(&self, ego: &Pose2) -> Vec<Vector2<f64>> {
        std::iter::once(ego.translation()).chain(self.waypoints.iter().copied()).collect()
    }

    pub fn length(&self) -> f64 {
        self.features[5]
    }

    pub fn side_of(&self, cone: usize) -> Side {
        if self.left_cones.contains(&cone) {
            Side::Left
        } else if self.right_cones.contains(&cone) {
            Side::Right
        } else {
            Side::Neither
        }
    }
}

/// Recomputes features and all three score terms of `path`.
pub fn score_path(path: &mut CandidatePath, input: &PlanningInput, ego: &Pose2, prior: &PriorConfig, p_floor: f64) {
    let pos = |ids: &[usize]| ids.iter().map(|&i| input.positions[i]).collect::<Vec<_>>();
    let widths: Vec<f64> = path
        .crossed_edges
        .iter()
        .map(|&(a, b)| (input.positions[a] - input.positions[b]).norm())
        .collect();
    path.features = compute_features(
        &path.polyline(ego),
        &pos(&path.left_cones),
        &pos(&path.right_cones),
        &widths,
        prior.n_desired,
    );
    let sides: Vec<Side> = (0..input.positions.len()).map(|i| path.side_of(i)).collect();
    path.log_prior = log_prior(&path.features, prior);
    path.log_likelihood = log_likelihood(&input.colors, &sides, p_floor);
    path.log_posterior = path.log_prior + path.log_likelihood;
}

/// Index of the best candidate, if any.
pub fn select_path(candidates: &[CandidatePath]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        match best {
            Some(b) if !better((c.log_posterior, &c.features), (candidates[b].log_posterior, &candidates[b].features)) => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Clone)]
struct Partial {
    triangle: usize,
    visited: Vec<usize>,
    last: Vector2<f64>,
    length: f64,
    path: CandidatePath,
}

pub fn start_triangle(tri: &Triangulation, ego: &Pose2, probe_distance_m: f64) -> Option<usize> {
    let probe = ego.transform_point(&Vector2::new(probe_distance_m, 0.0));
    (0..tri.triangles.len()).min_by(|&a, &b| {
        (tri.centroid(a) - probe)
            .norm_squared()
            .total_cmp(&(tri.centroid(b) - probe).norm_squared())
    })
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Grows paths from the start triangle across interior edges and returns the
/// scored maximal paths.
pub fn enumerate_paths(
    tri: &Triangulation,
    input: &PlanningInput,
    ego: &Pose2,
    limits: &SearchLimits,
    prior: &PriorConfig,
    p_floor: f64,
) -> Vec<CandidatePath> {
    let Some(start) = start_triangle(tri, ego, limits.probe_distance_m) else {
        return Vec::new();
    };
    let mut frontier = vec![Partial {
        triangle: start,
        visited: vec![start],
        last: ego.translation(),
        length: 0.0,
        path: CandidatePath::empty(),
    }];
    let mut leaves = Vec::new();

    while !frontier.is_empty() {
        let mut next = Vec::new();
        for p in frontier {
            let depth = p.path.crossed_edges.len();
            if depth > 0 && (depth >= limits.max_edges || p.length >= limits.max_length_m) {
                leaves.push(p.path);
                continue;
            }
            let before = next.len();
            for k in 0..3 {
                let Some(nb) = tri.neighbors[p.triangle][k] else { continue };
                if p.visited.contains(&nb) {
                    continue;
                }
                let (pa, pb) = tri.edge(p.triangle, k);
                let (a, b) = (tri.points[pa], tri.points[pb]);
                if (a - b).norm() > limits.max_edge_length_m {
                    continue;
                }
                let m = (a + b) / 2.0;
                if depth == 0 && ego.inverse_transform_point(&m).x <= 0.0 {
                    continue;
                }
                let d = m - p.last;
                let s = cross(&d, &(a - m));
                if s == 0.0 || !s.is_finite() {
                    continue;
                }
                let (ia, ib) = (tri.vertices[pa], tri.vertices[pb]);
                let (l, r) = if s > 0.0 { (ia, ib) } else { (ib, ia) };
                if p.path.right_cones.contains(&l) || p.path.left_cones.contains(&r) {
                    continue;
                }
                let mut q = p.clone();
                q.triangle = nb;
                q.visited.push(nb);
                q.length += d.norm();
                q.last = m;
                q.path.waypoints.push(m);
                q.path.crossed_edges.push((ia, ib));
                if !q.path.left_cones.contains(&l) {
                    q.path.left_cones.push(l);
                }
                if !q.path.right_cones.contains(&r) {
                    q.path.right_cones.push(r);
                }
                score_path(&mut q.path, input, ego, prior, p_floor);
                next.push(q);
            }
            if next.len() == before && depth > 0 {
                leaves.push(p.path);
            }
        }
        if let Some(w) = limits.beam_width {
            if next.len() > w {
                // Stable sort keeps generation order among exact ties.
                next.sort_by(|x, y| {
                    let (xs, ys) = ((x.path.log_posterior, &x.path.features), (y.path.log_posterior, &y.path.features));
                    if better(xs, ys) {
                        std::cmp::Ordering::Less
                    } else if better(ys, xs) {
                        std::cmp::Ordering::Greater
                    } else {
                        std::cmp::Ordering::Equal
                    }
                });
                next.truncate(w);
            }
        }
        frontier = next;
    }
    leaves
}
