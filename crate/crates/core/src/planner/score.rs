//! Path features and the prior/likelihood/posterior score.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::color::ColorDistribution;
use crate::geometry::normalize_angle;

/// F1..F6: max heading change, left gap std, right gap std, width std,
/// capped edge count, path length.
pub type Features = [f64; 6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTerm {
    pub weight: f64,
    pub setpoint: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    pub w_prior: f64,
    pub terms: [FeatureTerm; 6],
    /// Edge count beyond which F5 saturates.
    pub n_desired: usize,
}

impl PriorConfig {
    /// Default terms for a planning horizon of `max_length_m` and `n_desired` edges.
    pub fn for_limits(max_length_m: f64, n_desired: usize) -> Self {
        let t = |weight, setpoint, scale| FeatureTerm { weight, setpoint, scale };
        PriorConfig {
            w_prior: 29.0,
            terms: [
                // Calibrated so that kinks of ~1 rad cost about as much as a missing edge.
                t(0.1, 0.0, 0.25),
                t(0.1, 0.0, 1.0),
                t(0.1, 0.0, 1.0),
                t(0.1, 0.0, 1.0),
                t(0.1, n_desired as f64, 1.0),
                t(0.5, max_length_m, max_length_m * max_length_m),
            ],
            n_desired,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.w_prior >= 0.0) {
            return Err("w_prior must be non-negative".into());
        }
        for (j, t) in self.terms.iter().enumerate() {
            if !(t.scale > 0.0) || !(t.weight >= 0.0) || !t.setpoint.is_finite() {
                return Err(format!("feature {} needs weight >= 0 and scale > 0", j + 1));
            }
        }
        Ok(())
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::for_limits(15.0, 8)
    }
}

/// Population standard deviation; 0 for empty input.
pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn consecutive_gaps(points: &[Vector2<f64>]) -> Vec<f64> {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
}

/// Features of a path polyline.
///
/// `polyline` is the ego position followed by the waypoints; `left`/`right`
/// are boundary cone positions in order along the path; `widths` are the
/// lengths of the crossed edges.
pub fn compute_features(
    polyline: &[Vector2<f64>],
    left: &[Vector2<f64>],
    right: &[Vector2<f64>],
    widths: &[f64],
    n_desired: usize,
) -> Features {
    let headings: Vec<f64> = polyline
        .windows(2)
        .filter(|w| w[1] != w[0])
        .map(|w| (w[1].y - w[0].y).atan2(w[1].x - w[0].x))
        .collect();
    let f1 = headings
        .windows(2)
        .map(|h| normalize_angle(h[1] - h[0]).abs())
        .fold(0.0, f64::max);
    let f2 = population_std(&consecutive_gaps(left));
    let f3 = population_std(&consecutive_gaps(right));
    let f4 = population_std(widths);
    let f5 = widths.len().min(n_desired) as f64;
    let f6 = consecutive_gaps(polyline).iter().sum();
    [f1, f2, f3, f4, f5, f6]
}

pub fn log_prior(features: &Features, config: &PriorConfig) -> f64 {
    let cost: f64 = features
        .iter()
        .zip(&config.terms)
        .map(|(f, t)| t.weight * (f - t.setpoint).powi(2) / t.scale)
        .sum();
    -config.w_prior * cost
}

/// Side a cone was assigned to by a candidate path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Neither,
}

pub fn color_factor(color: &ColorDistribution, side: Side) -> f64 {
    match side {
        Side::Left => color.p_blue.max(color.p_unknown),
        Side::Right => color.p_yellow.max(color.p_unknown),
        Side::Neither => color.p_blue.max(color.p_yellow).max(color.p_unknown),
    }
}

/// Sum of log color factors over every cone, each floored at `p_floor`.
pub fn log_likelihood(colors: &[ColorDistribution], sides: &[Side], p_floor: f64) -> f64 {
    colors
        .iter()
        .zip(sides)
        .map(|(c, s)| color_factor(c, *s).max(p_floor).ln())
        .sum()
}

/// Total order used for selection: higher posterior, then longer, then straighter.
pub fn better(a: (f64, &Features), b: (f64, &Features)) -> bool {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => match a.1[5].total_cmp(&b.1[5]) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => a.1[0] < b.1[0],
        },
    }
}
