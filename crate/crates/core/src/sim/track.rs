//! Closed-loop track generation from arcs and straights.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::color::ConeColor;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Pose2};

/// Rule-book style limits a generated track must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleLimits {
    pub min_width_m: f64,
    pub max_width_m: f64,
    pub max_cone_spacing_m: f64,
}

impl Default for RuleLimits {
    fn default() -> Self {
        RuleLimits {
            min_width_m: 3.0,
            max_width_m: 5.0,
            max_cone_spacing_m: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrackSpec {
    /// Counter-clockwise circle starting at the origin heading +x.
    Circle {
        radius_m: f64,
        width_m: f64,
        cone_spacing_m: f64,
        #[serde(default)]
        rules: RuleLimits,
    },
    /// Random composition of arcs and straights closed into a loop.
    Random {
        target_length_m: f64,
        width_m: f64,
        cone_spacing_m: f64,
        min_radius_m: f64,
        hairpins: usize,
        /// Required gap between the boundaries of non-adjacent track parts.
        clearance_m: f64,
        #[serde(default = "default_true")]
        start_line: bool,
        #[serde(default)]
        rules: RuleLimits,
    },
}

fn default_true() -> bool {
    true
}

impl TrackSpec {
    /// The FSG-like reference layout: 250 m with two hairpins.
    pub fn fsg_like() -> Self {
        TrackSpec::Random {
            target_length_m: 250.0,
            width_m: 3.5,
            cone_spacing_m: 4.5,
            min_radius_m: 5.0,
            hairpins: 2,
            clearance_m: 3.0,
            start_line: true,
            rules: RuleLimits::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (width, spacing, rules) = match self {
            TrackSpec::Circle {
                radius_m,
                width_m,
                cone_spacing_m,
                rules,
            } => {
                if !(*radius_m > 0.0) || *radius_m < 0.5 * width_m + 0.5 {
                    return Err(Error::InfeasibleTrack(format!(
                        "radius {radius_m} m too small for width {width_m} m"
                    )));
                }
                (*width_m, *cone_spacing_m, rules)
            }
            TrackSpec::Random {
                target_length_m,
                width_m,
                cone_spacing_m,
                min_radius_m,
                clearance_m,
                rules,
                ..
            } => {
                if !(*min_radius_m > 0.0) || *min_radius_m < 0.5 * width_m + 0.5 {
                    return Err(Error::InfeasibleTrack(format!(
                        "minimum radius {min_radius_m} m too small for width {width_m} m"
                    )));
                }
                if !(*target_length_m >= 20.0 * min_radius_m) {
                    return Err(Error::InfeasibleTrack(format!(
                        "target length {target_length_m} m too short for minimum radius {min_radius_m} m"
                    )));
                }
                if !(*clearance_m >= 0.0) {
                    return Err(Error::InfeasibleTrack("negative clearance".into()));
                }
                (*width_m, *cone_spacing_m, rules)
            }
        };
        if !(width >= rules.min_width_m && width <= rules.max_width_m) {
            return Err(Error::InfeasibleTrack(format!(
                "width {width} m outside [{}, {}] m",
                rules.min_width_m, rules.max_width_m
            )));
        }
        if !(spacing > 0.0 && spacing <= rules.max_cone_spacing_m) {
            return Err(Error::InfeasibleTrack(format!(
                "cone spacing {spacing} m outside (0, {}] m",
                rules.max_cone_spacing_m
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackCone {
    #[serde(rename = "x_m", alias = "x")]
    pub x: f64,
    #[serde(rename = "y_m", alias = "y")]
    pub y: f64,
    pub color: ConeColor,
}

impl TrackCone {
    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }
}

/// Ground truth for one closed track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDefinition {
    pub cones: Vec<TrackCone>,
    /// Closed polyline; the closing segment back to the first point is implied.
    #[serde(rename = "centerline_m")]
    pub centerline: Vec<[f64; 2]>,
    #[serde(rename = "total_length_m")]
    pub total_length: f64,
    #[serde(rename = "width_m", default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

impl TrackDefinition {
    pub fn centerline_path(&self) -> Centerline {
        Centerline::new(self.centerline.iter().map(|p| Vector2::new(p[0], p[1])).collect())
    }
}

/// Arc-length parametrized closed polyline.
#[derive(Debug, Clone)]
pub struct Centerline {
    points: Vec<Vector2<f64>>,
    cumulative: Vec<f64>,
    length: f64,
}

impl Centerline {
    pub fn new(points: Vec<Vector2<f64>>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for i in 0..points.len() {
            let j = (i + 1) % points.len();
            acc += (points[j] - points[i]).norm();
            cumulative.push(acc);
        }
        Centerline {
            points,
            cumulative,
            length: acc,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn point_at(&self, s: f64) -> Vector2<f64> {
        if self.points.is_empty() {
            return Vector2::zeros();
        }
        let s = s.rem_euclid(self.length.max(f64::MIN_POSITIVE));
        let i = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.points.len() - 1),
            Err(i) => i - 1,
        };
        let a = self.points[i];
        let b = self.points[(i + 1) % self.points.len()];
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg > 0.0 { (s - self.cumulative[i]) / seg } else { 0.0 };
        a + (b - a) * t
    }

    /// Pose on the centerline; heading from a central difference over ±0.5 m.
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let p = self.point_at(s);
        let d = self.point_at(s + 0.5) - self.point_at(s - 0.5);
        Pose2::new(p.x, p.y, d.y.atan2(d.x))
    }

    /// Arc length of the closest centerline point and the distance to it.
    pub fn project(&self, q: &Vector2<f64>) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        let n = self.points.len();
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 > 0.0 {
                ((q - a).dot(&ab) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (a + ab * t - q).norm();
            if d < best.1 {
                best = (self.cumulative[i] + t * len2.sqrt(), d);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Straight(f64),
    Arc { radius: f64, angle: f64 },
}

const SAMPLE_STEP: f64 = 0.1;

fn sample_segments(segments: &[Segment], step: f64) -> Vec<(Vector2<f64>, f64)> {
    let mut out = Vec::new();
    let mut p = Vector2::zeros();
    let mut heading = 0.0f64;
    for seg in segments {
        match *seg {
            Segment::Straight(len) => {
                let n = (len / step).ceil().max(1.0) as usize;
                let dir = Vector2::new(heading.cos(), heading.sin());
                for k in 0..n {
                    out.push((p + dir * (len * k as f64 / n as f64), heading));
                }
                p += dir * len;
            }
            Segment::Arc { radius, angle } => {
                let len = radius * angle.abs();
                let n = (len / step).ceil().max(1.0) as usize;
                let sign = angle.signum();
                let center = p + Vector2::new(-heading.sin(), heading.cos()) * (radius * sign);
                for k in 0..n {
                    let h = heading + angle * k as f64 / n as f64;
                    let q = center + Vector2::new(h.sin(), -h.cos()) * (radius * sign);
                    out.push((q, h));
                }
                heading += angle;
                p = center + Vector2::new(heading.sin(), -heading.cos()) * (radius * sign);
            }
        }
    }
    out
}

/// Places cones evenly along one offset boundary, at most `spacing` apart.
fn place_side(boundary: &[Vector2<f64>], spacing: f64, color: ConeColor) -> Vec<TrackCone> {
    let line = Centerline::new(boundary.to_vec());
    let n = (line.length() / spacing).ceil().max(3.0) as usize;
    (0..n)
        .map(|k| {
            let p = line.point_at(line.length() * k as f64 / n as f64);
            TrackCone {
                x: p.x,
                y: p.y,
                color,
            }
        })
        .collect()
}

fn interleave(left: Vec<TrackCone>, right: Vec<TrackCone>) -> Vec<TrackCone> {
    let (nl, nr) = (left.len(), right.len());
    let mut out = Vec::with_capacity(nl + nr);
    let (mut i, mut j) = (0, 0);
    while i < nl || j < nr {
        // Merge by fractional position along the loop, left first on ties.
        let fl = if i < nl { i as f64 / nl as f64 } else { f64::INFINITY };
        let fr = if j < nr { j as f64 / nr as f64 } else { f64::INFINITY };
        if fl <= fr {
            out.push(left[i]);
            i += 1;
        } else {
            out.push(right[j]);
            j += 1;
        }
    }
    out
}

fn min_clearance_ok(points: &[Vector2<f64>], total: f64, required: f64, separation: f64) -> bool {
    let step = total / points.len() as f64;
    let n = points.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let ds = (j - i) as f64 * step;
            let cyclic = ds.min(total - ds);
            if cyclic < separation {
                continue;
            }
            if (points[i] - points[j]).norm() < required {
                return false;
            }
        }
    }
    true
}

/// Generates a closed track deterministically from `seed`.
pub fn generate_track(spec: &TrackSpec, seed: u64) -> Result<TrackDefinition> {
    spec.validate()?;
    match spec {
        TrackSpec::Circle {
            radius_m,
            width_m,
            cone_spacing_m,
            ..
        } => Ok(circle_track(*radius_m, *width_m, *cone_spacing_m)),
        TrackSpec::Random {
            target_length_m,
            width_m,
            cone_spacing_m,
            min_radius_m,
            hairpins,
            clearance_m,
            start_line,
            ..
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20_000 {
                if let Some(segments) =
                    try_layout(&mut rng, *target_length_m, *min_radius_m, *hairpins)
                {
                    let samples = sample_segments(&segments, SAMPLE_STEP);
                    let track =
                        build_track(&samples, *width_m, *cone_spacing_m, *start_line);
                    let coarse: Vec<Vector2<f64>> = {
                        let line = track.centerline_path();
                        let n = (line.length() / 0.5).ceil() as usize;
                        (0..n)
                            .map(|k| line.point_at(line.length() * k as f64 / n as f64))
                            .collect()
                    };
                    let required = width_m + clearance_m;
                    if min_clearance_ok(
                        &coarse,
                        track.total_length,
                        required,
                        0.5 * PI * required,
                    ) {
                        return Ok(track);
                    }
                }
            }
            Err(Error::InfeasibleTrack(
                "no layout satisfying the clearance and length constraints was found".into(),
            ))
        }
    }
}

fn circle_track(radius: f64, width: f64, spacing: f64) -> TrackDefinition {
    let n_center = ((TAU * radius / SAMPLE_STEP).ceil() as usize).max(64);
    let center = Vector2::new(0.0, radius);
    let at = |phi: f64, r: f64| center + Vector2::new(phi.sin(), -phi.cos()) * r;
    let centerline: Vec<[f64; 2]> = (0..n_center)
        .map(|k| {
            let p = at(TAU * k as f64 / n_center as f64, radius);
            [p.x, p.y]
        })
        .collect();
    let pairs = (TAU * radius / spacing).floor() as usize;
    let mut cones = Vec::with_capacity(2 * pairs);
    for k in 0..pairs {
        let phi = TAU * k as f64 / pairs as f64;
        let l = at(phi, radius - 0.5 * width);
        let r = at(phi, radius + 0.5 * width);
        cones.push(TrackCone {
            x: l.x,
            y: l.y,
            color: ConeColor::Blue,
        });
        cones.push(TrackCone {
            x: r.x,
            y: r.y,
            color: ConeColor::Yellow,
        });
    }
    let line = Centerline::new(centerline.iter().map(|p| Vector2::new(p[0], p[1])).collect());
    TrackDefinition {
        cones,
        centerline,
        total_length: line.length(),
        width: Some(width),
    }
}

fn try_layout(
    rng: &mut ChaCha8Rng,
    target_length: f64,
    min_radius: f64,
    hairpins: usize,
) -> Option<Vec<Segment>> {
    let regular = rng.random_range(4..=7usize);
    let mut turns: Vec<(f64, f64)> = Vec::new();
    for _ in 0..hairpins {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let angle = sign * rng.random_range(0.85 * PI..PI);
        let radius = rng.random_range(min_radius..1.3 * min_radius);
        turns.push((radius, angle));
    }
    let r_lo = (2.0 * min_radius).max(8.0);
    for _ in 0..regular {
        let angle = rng.random_range(-0.5 * PI..0.9 * PI);
        let radius = rng.random_range(r_lo..r_lo.max(25.0));
        turns.push((radius, angle));
    }
    // Shuffle, then let the last regular turn close the heading.
    for i in (1..turns.len()).rev() {
        let j = rng.random_range(0..=i);
        turns.swap(i, j);
    }
    let last = turns.len() - 1;
    let sum: f64 = turns[..last].iter().map(|t| t.1).sum();
    let closing = TAU - sum;
    if !(0.15..=PI).contains(&closing.abs()) {
        return None;
    }
    turns[last].1 = closing;
    if closing.abs() > 0.85 * PI {
        turns[last].0 = turns[last].0.max(min_radius);
    }

    let mut straights: Vec<f64> = (0..turns.len())
        .map(|_| rng.random_range(4.0..30.0))
        .collect();

    // Closure and length are linear in the straight lengths: solve the
    // least-norm correction for [end_x, end_y, total_length].
    let mut headings = Vec::with_capacity(turns.len());
    let mut heading = 0.0f64;
    let mut arc_end = Vector2::zeros();
    let mut arc_length = 0.0;
    for &(radius, angle) in &turns {
        headings.push(heading);
        let sign = angle.signum();
        let c = Vector2::new(-heading.sin(), heading.cos()) * (radius * sign);
        let h2 = heading + angle;
        let e = c + Vector2::new(h2.sin(), -h2.cos()) * (radius * sign);
        arc_end += e;
        arc_length += radius * angle.abs();
        heading = h2;
    }
    let dirs: Vec<Vector2<f64>> = headings
        .iter()
        .map(|h| Vector2::new(h.cos(), h.sin()))
        .collect();
    let end: Vector2<f64> = arc_end
        + dirs
            .iter()
            .zip(&straights)
            .map(|(d, l)| d * *l)
            .sum::<Vector2<f64>>();
    let length: f64 = arc_length + straights.iter().sum::<f64>();
    let residual = Vector3::new(-end.x, -end.y, target_length - length);
    let mut gram = Matrix3::zeros();
    for d in &dirs {
        let row = Vector3::new(d.x, d.y, 1.0);
        gram += row * row.transpose();
    }
    let y = gram.try_inverse()? * residual;
    for (l, d) in straights.iter_mut().zip(&dirs) {
        *l += Vector3::new(d.x, d.y, 1.0).dot(&y);
        if *l < 2.0 {
            return None;
        }
    }

    // Start in the middle of the longest straight.
    let (start, _) = straights
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let mut segments = Vec::with_capacity(2 * turns.len() + 1);
    let n = turns.len();
    segments.push(Segment::Straight(0.5 * straights[start]));
    for k in 0..n {
        let i = (start + k) % n;
        let (radius, angle) = turns[i];
        segments.push(Segment::Arc { radius, angle });
        let next = (i + 1) % n;
        let len = if next == start {
            0.5 * straights[next]
        } else {
            straights[next]
        };
        segments.push(Segment::Straight(len));
    }
    Some(segments)
}

fn build_track(
    samples: &[(Vector2<f64>, f64)],
    width: f64,
    spacing: f64,
    start_line: bool,
) -> TrackDefinition {
    // Rotate so the start pose is the origin heading +x.
    let (p0, h0) = samples[0];
    let frame = Pose2::new(p0.x, p0.y, h0).inverse();
    let pts: Vec<(Vector2<f64>, f64)> = samples
        .iter()
        .map(|(p, h)| (frame.transform_point(p), normalize_angle(h - h0)))
        .collect();
    let left: Vec<Vector2<f64>> = pts
        .iter()
        .map(|(p, h)| p + Vector2::new(-h.sin(), h.cos()) * (0.5 * width))
        .collect();
    let right: Vec<Vector2<f64>> = pts
        .iter()
        .map(|(p, h)| p - Vector2::new(-h.sin(), h.cos()) * (0.5 * width))
        .collect();
    let mut l = place_side(&left, spacing, ConeColor::Blue);
    let mut r = place_side(&right, spacing, ConeColor::Yellow);
    if start_line {
        l[0].color = ConeColor::Orange;
        r[0].color = ConeColor::Orange;
    }
    let centerline: Vec<[f64; 2]> = pts.iter().map(|(p, _)| [p.x, p.y]).collect();
    let line = Centerline::new(pts.iter().map(|(p, _)| *p).collect());
    TrackDefinition {
        cones: interleave(l, r),
        centerline,
        total_length: line.length(),
        width: Some(width),
    }
}
