//! Damped Gauss-Newton over the pose-landmark graph.

use std::collections::VecDeque;

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::residuals::{observation_jacobians, observation_residual, odometry_jacobians, odometry_residual};
use super::skyline::SkylineMatrix;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub tol_rel: f64,
    /// Stop once the largest step component falls below this.
    pub tol_step: f64,
    pub max_iters: usize,
    pub initial_lambda: f64,
    pub max_lambda: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_rel: 1e-8,
            tol_step: 1e-12,
            max_iters: 100,
            initial_lambda: 1e-4,
            max_lambda: 1e12,
        }
    }
}

/// Optimized estimates, keyed by node id so they can be merged into a graph
/// that kept growing while the solver ran.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub poses: Vec<(NodeId, Pose2)>,
    pub landmarks: Vec<(NodeId, Vector2<f64>)>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Graph {
    /// Overwrites node estimates with the outcome's values; unknown ids are ignored.
    pub fn apply(&mut self, outcome: &OptimizeOutcome) {
        for (id, p) in &outcome.poses {
            if let Some(n) = self.poses.get_mut(*id as usize) {
                n.pose = *p;
            }
        }
        for (id, l) in &outcome.landmarks {
            if let Some(n) = self.landmarks.get_mut(*id as usize) {
                n.position = *l;
            }
        }
    }

    /// Total weighted squared residual at the current estimates.
    pub fn cost(&self) -> f64 {
        let poses: Vec<Pose2> = self.poses.iter().map(|p| p.pose).collect();
        let lms: Vec<Vector2<f64>> = self.landmarks.iter().map(|l| l.position).collect();
        total_cost(self, &poses, &lms)
    }
}

fn total_cost(g: &Graph, poses: &[Pose2], lms: &[Vector2<f64>]) -> f64 {
    let mut c = 0.0;
    for e in &g.odometry {
        let r = odometry_residual(&poses[e.from as usize], &poses[e.to as usize], &e.relative);
        c += r.dot(&(e.information * r));
    }
    for e in &g.observations {
        let r = observation_residual(&poses[e.pose as usize], &lms[e.landmark as usize], &e.measurement);
        c += r.dot(&(e.information * r));
    }
    c
}

/// Column offsets of the free variables; the first pose is the gauge.
struct Layout {
    pose: Vec<Option<usize>>,
    landmark: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(g: &Graph) -> Layout {
        let mut by_pose: Vec<Vec<usize>> = vec![Vec::new(); g.poses.len()];
        for l in &g.landmarks {
            by_pose[(l.created_at as usize).min(g.poses.len() - 1)].push(l.id as usize);
        }
        let mut pose = vec![None; g.poses.len()];
        let mut landmark = vec![0; g.landmarks.len()];
        let mut dim = 0;
        for (i, lms) in by_pose.iter().enumerate() {
            if i > 0 {
                pose[i] = Some(dim);
                dim += 3;
            }
            for &l in lms {
                landmark[l] = dim;
                dim += 2;
            }
        }
        Layout { pose, landmark, dim }
    }

    fn profile(&self, g: &Graph) -> Vec<usize> {
        let mut first: Vec<usize> = (0..self.dim).collect();
        let block = |off: usize, size: usize, first: &mut Vec<usize>| {
            for k in 0..size {
                first[off + k] = first[off + k].min(off);
            }
        };
        for &o in self.pose.iter().flatten() {
            block(o, 3, &mut first);
        }
        for &o in &self.landmark {
            block(o, 2, &mut first);
        }
        let mut couple = |a: usize, sa: usize, b: usize, sb: usize| {
            let (hi, shi, lo) = if a > b { (a, sa, b) } else { (b, sb, a) };
            for k in 0..shi {
                first[hi + k] = first[hi + k].min(lo);
            }
        };
        for e in &g.odometry {
            if let (Some(a), Some(b)) = (self.pose[e.from as usize], self.pose[e.to as usize]) {
                couple(a, 3, b, 3);
            }
        }
        for e in &g.observations {
            if let Some(a) = self.pose[e.pose as usize] {
                couple(a, 3, self.landmark[e.landmark as usize], 2);
            }
        }
        first
    }
}

fn accumulate<const R: usize, const A: usize, const B: usize>(
    h: &mut SkylineMatrix,
    oa: usize,
    ja: &SMatrix<f64, R, A>,
    ob: usize,
    jb: &SMatrix<f64, R, B>,
    info: &SMatrix<f64, R, R>,
) {
    let block = ja.transpose() * info * jb;
    for r in 0..A {
        for c in 0..B {
            if oa == ob && c > r {
                continue;
            }
            h.add(oa + r, ob + c, block[(r, c)]);
        }
    }
}

fn gradient<const R: usize, const A: usize>(
    g: &mut [f64],
    oa: usize,
    ja: &SMatrix<f64, R, A>,
    info: &SMatrix<f64, R, R>,
    e: &SVector<f64, R>,
) {
    let v = ja.transpose() * info * e;
    for r in 0..A {
        g[oa + r] += v[r];
    }
}

fn normal_equations(
    graph: &Graph,
    layout: &Layout,
    profile: &[usize],
    poses: &[Pose2],
    lms: &[Vector2<f64>],
) -> (SkylineMatrix, Vec<f64>) {
    let mut h = SkylineMatrix::with_profile(profile.to_vec());
    let mut g = vec![0.0; layout.dim];
    for e in &graph.odometry {
        let (xi, xj) = (&poses[e.from as usize], &poses[e.to as usize]);
        let r = odometry_residual(xi, xj, &e.relative);
        let (ji, jj) = odometry_jacobians(xi, xj, &e.relative);
        let (oi, oj) = (layout.pose[e.from as usize], layout.pose[e.to as usize]);
        let info = &e.information;
        if let Some(oi) = oi {
            accumulate(&mut h, oi, &ji, oi, &ji, info);
            gradient(&mut g, oi, &ji, info, &r);
        }
        if let Some(oj) = oj {
            accumulate(&mut h, oj, &jj, oj, &jj, info);
            gradient(&mut g, oj, &jj, info, &r);
            if let Some(oi) = oi {
                accumulate(&mut h, oj, &jj, oi, &ji, info);
            }
        }
    }
    for e in &graph.observations {
        let (x, l) = (&poses[e.pose as usize], &lms[e.landmark as usize]);
        let r = observation_residual(x, l, &e.measurement);
        let (jp, jl) = observation_jacobians(x, l);
        let ol = layout.landmark[e.landmark as usize];
        let info = &e.information;
        accumulate(&mut h, ol, &jl, ol, &jl, info);
        gradient(&mut g, ol, &jl, info, &r);
        if let Some(op) = layout.pose[e.pose as usize] {
            accumulate(&mut h, op, &jp, op, &jp, info);
            gradient(&mut g, op, &jp, info, &r);
            accumulate(&mut h, ol, &jl, op, &jp, info);
        }
    }
    (h, g)
}

/// Rejects graphs whose free variables are not all tied to the gauge pose.
fn check_constrained(graph: &Graph) -> Result<()> {
    let np = graph.poses.len();
    let nl = graph.landmarks.len();
    // Nodes: poses 0..np, landmarks np..np+nl.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); np + nl];
    for e in &graph.odometry {
        adj[e.from as usize].push(e.to as usize);
        adj[e.to as usize].push(e.from as usize);
    }
    let mut pose_landmarks = vec![0usize; np];
    let mut pose_odometry = vec![false; np];
    for e in &graph.odometry {
        pose_odometry[e.to as usize] = true;
        pose_odometry[e.from as usize] = true;
    }
    for e in &graph.observations {
        let (p, l) = (e.pose as usize, np + e.landmark as usize);
        adj[p].push(l);
        adj[l].push(p);
        pose_landmarks[p] += 1;
    }
    let mut seen = vec![false; np + nl];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(n) = queue.pop_front() {
        for &m in &adj[n] {
            if !seen[m] {
                seen[m] = true;
                queue.push_back(m);
            }
        }
    }
    if let Some(n) = seen.iter().position(|s| !s) {
        let what = if n < np {
            format!("pose {n} is not connected to the fixed pose")
        } else {
            format!("landmark {} is not connected to the fixed pose", n - np)
        };
        return Err(Error::RankDeficient(what));
    }
    for p in 1..np {
        if !pose_odometry[p] && pose_landmarks[p] < 2 {
            return Err(Error::RankDeficient(format!(
                "pose {p} has no odometry and fewer than two landmark observations"
            )));
        }
    }
    Ok(())
}

/// Minimizes the graph cost with the first pose held fixed.
pub fn optimize(graph: &Graph, config: &SolverConfig) -> Result<OptimizeOutcome> {
    if graph.poses.is_empty() {
        return Err(Error::EmptyGraph);
    }
    graph.validate()?;
    check_constrained(graph)?;

    let layout = Layout::new(graph);
    let profile = layout.profile(graph);
    let mut poses: Vec<Pose2> = graph.poses.iter().map(|p| p.pose).collect();
    let mut lms: Vec<Vector2<f64>> = graph.landmarks.iter().map(|l| l.position).collect();
    let initial_cost = total_cost(graph, &poses, &lms);
    let mut cost = initial_cost;
    let mut lambda = config.initial_lambda;
    let mut iterations = 0;
    let mut converged = layout.dim == 0 || cost == 0.0;

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let (h, g) = normal_equations(graph, &layout, &profile, &poses, &lms);
        let diag: Vec<f64> = (0..layout.dim).map(|i| h.diagonal(i)).collect();
        if let Some(i) = diag.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::RankDeficient(format!("variable {i} is unconstrained")));
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();

        let mut accepted = false;
        while lambda <= config.max_lambda {
            let mut damped = h.clone();
            for (i, d) in diag.iter().enumerate() {
                damped.add_diagonal(i, lambda * d);
            }
            let Ok(chol) = damped.factor() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let tiny = delta.iter().all(|d| d.abs() < config.tol_step);
            let (np, nl) = retract(&layout, &poses, &lms, &delta);
            let new_cost = total_cost(graph, &np, &nl);
            if new_cost.is_finite() && new_cost < cost {
                let rel = (cost - new_cost) / cost;
                poses = np;
                lms = nl;
                cost = new_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel < config.tol_rel || tiny || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            if tiny {
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No damping level reduces the cost: a local minimum to numerical precision.
            converged = true;
        }
    }

    Ok(OptimizeOutcome {
        poses: graph.poses.iter().map(|p| p.id).zip(poses).collect(),
        landmarks: graph.landmarks.iter().map(|l| l.id).zip(lms).collect(),
        initial_cost,
        final_cost: cost,
        iterations,
        converged,
    })
}

fn retract(layout: &Layout, poses: &[Pose2], lms: &[Vector2<f64>], delta: &[f64]) -> (Vec<Pose2>, Vec<Vector2<f64>>) {
    let np = poses
        .iter()
        .zip(&layout.pose)
        .map(|(p, o)| match o {
            Some(o) => Pose2 {
                x: p.x + delta[*o],
                y: p.y + delta[o + 1],
                theta: normalize_angle(p.theta + delta[o + 2]),
            },
            None => *p,
        })
        .collect();
    let nl = lms
        .iter()
        .zip(&layout.landmark)
        .map(|(l, &o)| l + Vector2::new(delta[o], delta[o + 1]))
        .collect();
    (np, nl)
}
