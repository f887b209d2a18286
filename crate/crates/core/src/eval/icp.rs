//! Point-to-point ICP for 2D cone maps.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Stop once the RMSE changes by less than this.
    pub tol_m: f64,
    /// Pairs further apart than this are left unmatched.
    pub reject_radius_m: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 100,
            tol_m: 1e-10,
            reject_radius_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Transform taking estimated points into the truth frame.
    pub rotation_rad: f64,
    pub translation_m: [f64; 2],
    /// (estimated index, truth index), one-to-one.
    pub correspondences: Vec<(usize, usize)>,
    pub rmse_m: f64,
    pub unmatched_estimated: usize,
    pub unmatched_truth: usize,
    pub iterations: usize,
    /// RMSE after each accepted iteration; non-increasing.
    pub rmse_history_m: Vec<f64>,
}

impl AlignmentResult {
    pub fn transform(&self) -> Pose2 {
        Pose2::new(self.translation_m[0], self.translation_m[1], self.rotation_rad)
    }
}

/// Closed-form rigid transform minimizing Σ|T(src) − dst|² over the pairs.
pub fn rigid_fit(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Result<Pose2> {
    assert_eq!(src.len(), dst.len());
    if src.is_empty() {
        return Err(Error::DegenerateGeometry("no correspondences".into()));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector2<f64>>() / n;
    let cd = dst.iter().sum::<Vector2<f64>>() / n;
    let (mut sin, mut cos) = (0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (p, q) = (p - cs, q - cd);
        cos += p.x * q.x + p.y * q.y;
        sin += p.x * q.y - p.y * q.x;
    }
    if src.len() > 1 && sin.abs() + cos.abs() < 1e-300 {
        return Err(Error::DegenerateGeometry("coincident points".into()));
    }
    let theta = if src.len() == 1 { 0.0 } else { sin.atan2(cos) };
    let r = crate::geometry::rotation(theta);
    let t = cd - r * cs;
    Ok(Pose2::new(t.x, t.y, theta))
}

/// Greedy one-to-one matching of `a` to `b` by increasing distance, within `radius`.
pub fn match_points(a: &[Vector2<f64>], b: &[Vector2<f64>], radius: f64) -> Vec<(usize, usize)> {
    let r2 = radius * radius;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in a.iter().enumerate() {
        for (j, q) in b.iter().enumerate() {
            let d = (p - q).norm_squared();
            if d <= r2 {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

fn spread(points: &[Vector2<f64>]) -> f64 {
    points.iter().map(|p| (p - points[0]).norm()).fold(0.0, f64::max)
}

fn rmse_of(est: &[Vector2<f64>], truth: &[Vector2<f64>], t: &Pose2, pairs: &[(usize, usize)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let s: f64 = pairs
        .iter()
        .map(|&(i, j)| (t.transform_point(&est[i]) - truth[j]).norm_squared())
        .sum();
    (s / pairs.len() as f64).sqrt()
}

/// Aligns `estimated` onto `truth` starting from `init`.
pub fn icp_align(estimated: &[Vector2<f64>], truth: &[Vector2<f64>], init: &Pose2, config: &IcpConfig) -> Result<AlignmentResult> {
    if estimated.is_empty() || truth.is_empty() {
        return Err(Error::DegenerateGeometry("empty point set".into()));
    }
    if (estimated.len() > 1 && spread(estimated) == 0.0) || (truth.len() > 1 && spread(truth) == 0.0) {
        return Err(Error::DegenerateGeometry("all points coincide".into()));
    }
    let mut t = *init;
    let moved: Vec<_> = estimated.iter().map(|p| t.transform_point(p)).collect();
    let mut pairs = match_points(&moved, truth, config.reject_radius_m);
    let mut rmse = rmse_of(estimated, truth, &t, &pairs);
    let mut history = vec![rmse];
    let mut iterations = 0;

    while iterations < config.max_iters && !pairs.is_empty() {
        iterations += 1;
        let src: Vec<_> = pairs.iter().map(|&(i, _)| estimated[i]).collect();
        let dst: Vec<_> = pairs.iter().map(|&(_, j)| truth[j]).collect();
        let candidate = rigid_fit(&src, &dst)?;
        let moved: Vec<_> = estimated.iter().map(|p| candidate.transform_point(p)).collect();
        let new_pairs = match_points(&moved, truth, config.reject_radius_m);
        let new_rmse = rmse_of(estimated, truth, &candidate, &new_pairs);
        // A rematch that loses pairs can raise the RMSE; keep the better iterate.
        if new_pairs.is_empty() || new_rmse > rmse || (new_pairs.len() < pairs.len() && new_rmse >= rmse) {
            break;
        }
        let change = rmse - new_rmse;
        t = candidate;
        pairs = new_pairs;
        rmse = new_rmse;
        history.push(rmse);
        if change < config.tol_m {
            break;
        }
    }

    Ok(AlignmentResult {
        rotation_rad: t.theta,
        translation_m: [t.x, t.y],
        unmatched_estimated: estimated.len() - pairs.len(),
        unmatched_truth: truth.len() - pairs.len(),
        correspondences: pairs,
        rmse_m: rmse,
        iterations,
        rmse_history_m: history,
    })
}

pub fn map_rmse(alignment: &AlignmentResult) -> f64 {
    alignment.rmse_m
}
