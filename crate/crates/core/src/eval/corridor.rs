//! True track corridor between the left and right cone boundaries.

use nalgebra::Vector2;

use crate::color::ConeColor;
use crate::sim::TrackDefinition;

#[derive(Debug, Clone)]
pub struct Corridor {
    pub left: Vec<Vector2<f64>>,
    pub right: Vec<Vector2<f64>>,
}

fn cross(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Crossing-number point-in-polygon test for a closed polygon.
pub fn point_in_polygon(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Parameter `t` along `p→q` where it first meets segment `a→b`, if it does.
pub fn segment_intersection(p: &Vector2<f64>, q: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> Option<f64> {
    let r = q - p;
    let s = b - a;
    let denom = cross(&r, &s);
    if denom == 0.0 {
        return None;
    }
    let t = cross(&(a - p), &s) / denom;
    let u = cross(&(a - p), &r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u)).then_some(t)
}

impl Corridor {
    /// Orders cones along the centerline; orange cones join the side they lie on.
    pub fn from_track(track: &TrackDefinition) -> Corridor {
        let center = track.centerline_path();
        let mut left = Vec::new();
        let mut right = Vec::new();
        for c in &track.cones {
            let p = c.position();
            let (s, _) = center.project(&p);
            let is_left = match c.color {
                ConeColor::Blue => true,
                ConeColor::Yellow => false,
                ConeColor::Orange => {
                    let pose = center.pose_at(s);
                    pose.inverse_transform_point(&p).y > 0.0
                }
            };
            if is_left { &mut left } else { &mut right }.push((s, p));
        }
        let order = |v: &mut Vec<(f64, Vector2<f64>)>| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            v.iter().map(|x| x.1).collect::<Vec<_>>()
        };
        Corridor {
            left: order(&mut left),
            right: order(&mut right),
        }
    }

    /// On track iff inside exactly one of the two boundary polygons.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        point_in_polygon(p, &self.left) != point_in_polygon(p, &self.right)
    }

    fn edges(&self) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>)> + '_ {
        [&self.left, &self.right]
            .into_iter()
            .flat_map(|b| (0..b.len()).map(move |i| (b[i], b[(i + 1) % b.len()])))
    }

    /// Arc length along `polyline` where it first leaves the corridor.
    pub fn first_exit(&self, polyline: &[Vector2<f64>]) -> Option<f64> {
        let mut walked = 0.0;
        if let Some(first) = polyline.first() {
            if !self.contains(first) {
                return Some(0.0);
            }
        }
        for w in polyline.windows(2) {
            let (p, q) = (w[0], w[1]);
            let len = (q - p).norm();
            let hit = self
                .edges()
                .filter_map(|(a, b)| segment_intersection(&p, &q, &a, &b))
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))));
            if let Some(t) = hit {
                return Some(walked + t * len);
            }
            walked += len;
            if !self.contains(&q) {
                return Some(walked);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_track, TrackSpec};
    use proptest::prelude::*;

    /// Winding number of `poly` around `p`.
    fn winding(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> i32 {
        let mut w = 0;
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let side = cross(&(b - a), &(p - a));
            if a.y <= p.y {
                if b.y > p.y && side > 0.0 {
                    w += 1;
                }
            } else if b.y <= p.y && side < 0.0 {
                w -= 1;
            }
        }
        w
    }

    fn track() -> TrackDefinition {
        static TRACK: std::sync::OnceLock<TrackDefinition> = std::sync::OnceLock::new();
        TRACK.get_or_init(|| generate_track(&TrackSpec::fsg_like(), 7).unwrap()).clone()
    }

    #[test]
    fn centerline_is_on_track_and_offsets_are_not() {
        let t = track();
        let c = Corridor::from_track(&t);
        let center = t.centerline_path();
        let mut s = 0.0;
        while s < center.length() {
            let pose = center.pose_at(s);
            assert!(c.contains(&pose.translation()), "s = {s}");
            assert!(!c.contains(&pose.transform_point(&Vector2::new(0.0, 4.0))), "s = {s}");
            assert!(!c.contains(&pose.transform_point(&Vector2::new(0.0, -4.0))), "s = {s}");
            s += 0.5;
        }
    }

    #[test]
    fn exit_distance() {
        let t = track();
        let c = Corridor::from_track(&t);
        let start = t.centerline_path().pose_at(10.0);
        let inside = [start.translation(), start.transform_point(&Vector2::new(1.0, 0.0))];
        assert_eq!(c.first_exit(&inside), None);
        let out = [start.translation(), start.transform_point(&Vector2::new(0.0, 6.0))];
        let d = c.first_exit(&out).unwrap();
        assert!(d > 1.0 && d < 3.0, "{d}");
    }

    proptest! {
        #[test]
        fn crossing_number_matches_winding_number(x in -60.0..60.0f64, y in -60.0..60.0f64) {
            static C: std::sync::OnceLock<Corridor> = std::sync::OnceLock::new();
            let c = C.get_or_init(|| Corridor::from_track(&track()));
            let p = Vector2::new(x, y);
            for poly in [&c.left, &c.right] {
                prop_assert_eq!(point_in_polygon(&p, poly), winding(&p, poly) != 0);
            }
        }
    }
}
