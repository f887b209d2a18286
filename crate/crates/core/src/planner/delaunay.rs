//! Bowyer–Watson Delaunay triangulation.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::Vector2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Triangulation {
    pub points: Vec<Vector2<f64>>,
    /// `vertices[k]` is the caller's index of `points[k]`; exact duplicates are dropped.
    pub vertices: Vec<usize>,
    /// Counter-clockwise index triples into `points`.
    pub triangles: Vec<[usize; 3]>,
    /// `neighbors[t][k]` shares the edge opposite vertex `k` of triangle `t`.
    pub neighbors: Vec<[Option<usize>; 3]>,
}

pub fn orient(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Positive when `d` lies strictly inside the circumcircle of CCW triangle `abc`.
pub fn in_circle(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
    let (ax, ay) = (a.x - d.x, a.y - d.y);
    let (bx, by) = (b.x - d.x, b.y - d.y);
    let (cx, cy) = (c.x - d.x, c.y - d.y);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

impl Triangulation {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Unique undirected edges as sorted point-index pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Point indices of the edge opposite vertex `k` of triangle `t`.
    pub fn edge(&self, t: usize, k: usize) -> (usize, usize) {
        let tri = self.triangles[t];
        (tri[(k + 1) % 3], tri[(k + 2) % 3])
    }

    pub fn centroid(&self, t: usize) -> Vector2<f64> {
        let [a, b, c] = self.triangles[t];
        (self.points[a] + self.points[b] + self.points[c]) / 3.0
    }
}

/// Triangulates `input`; fails for fewer than three distinct points or
/// collinear input.
pub fn triangulate(input: &[Vector2<f64>]) -> Result<Triangulation> {
    let mut points = Vec::with_capacity(input.len() + 3);
    let mut vertices = Vec::with_capacity(input.len());
    for (i, p) in input.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(Error::DegenerateGeometry(format!("point {i} is not finite")));
        }
        if points.iter().any(|q: &Vector2<f64>| q == p) {
            continue;
        }
        points.push(*p);
        vertices.push(i);
    }
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateGeometry(format!("{n} distinct points")));
    }
    let j = far_index(&points);
    let far2 = (points[j] - points[0]).norm_squared();
    if !(0..n).any(|i| orient(&points[0], &points[j], &points[i]).abs() > 1e-12 * far2) {
        return Err(Error::DegenerateGeometry("collinear points".into()));
    }

    // The enclosing triangle's corners sit at infinity in these directions,
    // so hull triangles are never lost to a finite super triangle.
    const FAR: [Vector2<f64>; 3] = [Vector2::new(-1.0, -1.0), Vector2::new(1.0, -1.0), Vector2::new(0.0, 1.0)];
    let far = |v: usize| (v >= n).then(|| FAR[v - n]);
    let orient_sym = |u: usize, v: usize, p: &Vector2<f64>| match (far(u), far(v)) {
        (None, None) => orient(&points[u], &points[v], p),
        (None, Some(d)) => d.perp(&(p - points[u])),
        (Some(d), None) => -d.perp(&(p - points[v])),
        (Some(a), Some(b)) => a.perp(&b),
    };
    let in_circle_sym = |tri: [usize; 3], p: &Vector2<f64>| -> bool {
        let k = tri.iter().filter(|&&v| v >= n).count();
        // Rotate so the finite vertices come first.
        let r = (0..3)
            .find(|&r| (0..3 - k).all(|i| tri[(r + i) % 3] < n))
            .unwrap_or(0);
        let [a, b, c] = [tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]];
        match k {
            0 => in_circle(&points[a], &points[b], &points[c], p) > 0.0,
            // Circle through a, b and a point at infinity: the open half-plane
            // left of ab, plus the open segment ab itself.
            1 => {
                let o = orient(&points[a], &points[b], p);
                o > 0.0 || (o == 0.0 && (p - points[a]).dot(&(p - points[b])) < 0.0)
            }
            // Circle through a and two points at infinity.
            2 => {
                let (d1, d2) = (FAR[b - n], FAR[c - n]);
                let den = 2.0 * d1.perp(&d2);
                let centre = Vector2::new(
                    d2.y * d1.norm_squared() - d1.y * d2.norm_squared(),
                    d1.x * d2.norm_squared() - d2.x * d1.norm_squared(),
                ) / den;
                centre.dot(&(p - points[a])) > 0.0
            }
            _ => true,
        }
    };

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let mut alive: Vec<bool> = vec![true];
    for i in 0..n {
        let p = points[i];
        // Seed the cavity with a triangle holding p whose circumcircle holds p,
        // then grow it through neighbors so the removed region stays connected.
        let holds = |t: usize| {
            let [a, b, c] = tris[t];
            alive[t] && orient_sym(a, b, &p) >= 0.0 && orient_sym(b, c, &p) >= 0.0 && orient_sym(c, a, &p) >= 0.0
        };
        let seed = (0..tris.len())
            .find(|&t| holds(t) && in_circle_sym(tris[t], &p))
            .or_else(|| (0..tris.len()).find(|&t| holds(t)));
        let Some(seed) = seed else { continue };
        let mut edge_owner: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (t, tri) in tris.iter().enumerate() {
            if alive[t] {
                for k in 0..3 {
                    let (a, b) = (tri[k], tri[(k + 1) % 3]);
                    edge_owner.entry((a.min(b), a.max(b))).or_default().push(t);
                }
            }
        }
        let mut bad = vec![seed];
        let mut in_cavity = vec![false; tris.len()];
        in_cavity[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(t) = queue.pop_front() {
            let tri = tris[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                for &u in &edge_owner[&(a.min(b), a.max(b))] {
                    if !in_cavity[u] && in_circle_sym(tris[u], &p) {
                        in_cavity[u] = true;
                        bad.push(u);
                        queue.push_back(u);
                    }
                }
            }
        }
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for &t in &bad {
            let tri = tris[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let shared = edge_owner[&(a.min(b), a.max(b))]
                    .iter()
                    .any(|&u| u != t && in_cavity[u]);
                if !shared {
                    boundary.push((a, b));
                }
            }
            alive[t] = false;
        }
        for (a, b) in boundary {
            tris.push([a, b, i]);
            alive.push(true);
        }
    }

    let triangles: Vec<[usize; 3]> = tris
        .into_iter()
        .zip(alive)
        .filter(|(t, a)| *a && t.iter().all(|&v| v < n))
        .map(|(t, _)| t)
        .collect();

    let mut owner: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            owner.entry((a.min(b), a.max(b))).or_default().push((t, k));
        }
    }
    let mut neighbors = vec![[None; 3]; triangles.len()];
    for sides in owner.values() {
        if let [(t, k), (u, j)] = sides[..] {
            neighbors[t][k] = Some(u);
            neighbors[u][j] = Some(t);
        }
    }
    Ok(Triangulation {
        points,
        vertices,
        triangles,
        neighbors,
    })
}

fn far_index(points: &[Vector2<f64>]) -> usize {
    (1..points.len())
        .max_by(|&i, &j| (points[i] - points[0]).norm().total_cmp(&(points[j] - points[0]).norm()))
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn assert_delaunay(t: &Triangulation) {
        for tri in &t.triangles {
            let [a, b, c] = tri.map(|i| t.points[i]);
            assert!(orient(&a, &b, &c) > 0.0);
            let r2 = circumradius2(&a, &b, &c);
            for p in &t.points {
                // Scale-aware tolerance on the determinant.
                assert!(in_circle(&a, &b, &c, p) <= 1e-9 * r2 * r2.max(1.0), "{p:?} inside {tri:?}");
            }
        }
    }

    fn circumradius2(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
        let d = 2.0 * orient(a, b, c);
        let (b, c) = (b - a, c - a);
        let ux = (c.y * b.norm_squared() - b.y * c.norm_squared()) / d;
        let uy = (b.x * c.norm_squared() - c.x * b.norm_squared()) / d;
        ux * ux + uy * uy
    }

    /// Monotone-chain convex hull area.
    fn hull_area(points: &[Vector2<f64>]) -> f64 {
        let mut p = points.to_vec();
        p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        p.dedup();
        let mut hull: Vec<Vector2<f64>> = Vec::new();
        for pass in 0..2 {
            let start = hull.len();
            for k in 0..p.len() {
                let q = if pass == 0 { p[k] } else { p[p.len() - 1 - k] };
                while hull.len() >= start + 2 && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], &q) <= 0.0 {
                    hull.pop();
                }
                hull.push(q);
            }
            hull.pop();
        }
        (0..hull.len()).map(|i| hull[i].perp(&hull[(i + 1) % hull.len()])).sum::<f64>() / 2.0
    }

    fn covered_area(t: &Triangulation) -> f64 {
        t.triangles
            .iter()
            .map(|tri| orient(&t.points[tri[0]], &t.points[tri[1]], &t.points[tri[2]]) / 2.0)
            .sum()
    }

    #[test]
    fn flat_hull_is_covered() {
        // A barely convex chain: a finite enclosing triangle loses these hull triangles.
        let mut pts: Vec<_> = (0..12).map(|i| {
            let x = i as f64 * 4.5;
            Vector2::new(x, 1e-4 * (x - 25.0).powi(2))
        }).collect();
        pts.push(Vector2::new(20.0, 3.5));
        let t = triangulate(&pts).unwrap();
        assert_delaunay(&t);
        assert!((covered_area(&t) - hull_area(&pts)).abs() < 1e-9);
        assert_eq!(t.triangles.len(), 11);
    }

    #[test]
    fn minimal_triangle() {
        let t = triangulate(&[Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)]).unwrap();
        assert_eq!(t.triangles.len(), 1);
        assert_eq!(t.neighbors[0], [None; 3]);
    }

    #[test]
    fn unit_square() {
        let pts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| Vector2::new(x, y));
        let t = triangulate(&pts).unwrap();
        assert_eq!(t.triangles.len(), 2);
        assert_eq!(t.edges().len(), 5);
        assert_delaunay(&t);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(triangulate(&[Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)]).is_err());
        let line: Vec<_> = (0..5).map(|i| Vector2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(triangulate(&line).is_err());
        let dup = [Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0), Vector2::new(1.0, 1.0)];
        assert!(triangulate(&dup).is_err());
    }

    #[test]
    fn grid_is_fully_triangulated() {
        let pts: Vec<_> = (0..5).flat_map(|i| (0..4).map(move |j| Vector2::new(i as f64 * 4.5, j as f64 * 3.5))).collect();
        let t = triangulate(&pts).unwrap();
        // Convex position count: 2n - 2 - h with h = 14 hull points.
        assert_eq!(t.triangles.len(), 2 * 20 - 2 - 14);
        assert_delaunay(&t);
    }

    proptest! {
        #[test]
        fn random_sets_are_delaunay(pts in prop::collection::vec((-30.0..30.0f64, -30.0..30.0f64), 3..60)) {
            let pts: Vec<_> = pts.into_iter().map(|(x, y)| Vector2::new(x, y)).collect();
            if let Ok(t) = triangulate(&pts) {
                assert_delaunay(&t);
                let (got, want) = (covered_area(&t), hull_area(&pts));
                prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "covers {got}, hull {want}");
                // Every interior edge has exactly two triangles.
                for (ti, ns) in t.neighbors.iter().enumerate() {
                    for (k, n) in ns.iter().enumerate() {
                        if let Some(u) = n {
                            let (a, b) = t.edge(ti, k);
                            prop_assert!(t.triangles[*u].contains(&a) && t.triangles[*u].contains(&b));
                        }
                    }
                }
            }
        }
    }
}
