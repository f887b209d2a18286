//! Bivariate Gaussians used for cone position uncertainty.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue a covariance is allowed to carry, in m².
pub const MIN_EIGENVALUE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "GaussianRepr", into = "GaussianRepr")]
pub struct Gaussian2 {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean_m: [f64; 2],
    cov_m2: [[f64; 2]; 2],
}

impl From<GaussianRepr> for Gaussian2 {
    fn from(r: GaussianRepr) -> Self {
        Gaussian2 {
            mean: Vector2::new(r.mean_m[0], r.mean_m[1]),
            cov: Matrix2::new(r.cov_m2[0][0], r.cov_m2[0][1], r.cov_m2[1][0], r.cov_m2[1][1]),
        }
    }
}

impl From<Gaussian2> for GaussianRepr {
    fn from(g: Gaussian2) -> Self {
        GaussianRepr {
            mean_m: [g.mean.x, g.mean.y],
            cov_m2: [[g.cov[(0, 0)], g.cov[(0, 1)]], [g.cov[(1, 0)], g.cov[(1, 1)]]],
        }
    }
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mid - rad, mid + rad)
}

pub fn is_spd(m: &Matrix2<f64>) -> bool {
    let asym = (m[(0, 1)] - m[(1, 0)]).abs();
    let scale = m[(0, 0)].abs().max(m[(1, 1)].abs()).max(1.0);
    m.iter().all(|v| v.is_finite()) && asym <= 1e-9 * scale && sym_eigenvalues(m).0 > 0.0
}

/// Symmetric projection followed by an eigenvalue floor at [`MIN_EIGENVALUE`].
pub fn make_spd(m: &Matrix2<f64>) -> Matrix2<f64> {
    floor_eigenvalues(m, MIN_EIGENVALUE)
}

/// Symmetric projection with every eigenvalue raised to at least `floor`.
pub fn floor_eigenvalues(m: &Matrix2<f64>, floor: f64) -> Matrix2<f64> {
    let floor = floor.max(MIN_EIGENVALUE);
    let s = 0.5 * (m + m.transpose());
    let (lo, hi) = sym_eigenvalues(&s);
    if lo >= floor {
        return s;
    }
    let b = s[(0, 1)];
    let a = s[(0, 0)];
    let d = s[(1, 1)];
    // Unit eigenvectors for (lo, hi).
    let (v_lo, v_hi) = if b.abs() > 1e-300 {
        let u = Vector2::new(lo - d, b).normalize();
        (u, Vector2::new(-u.y, u.x))
    } else if a <= d {
        (Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0))
    } else {
        (Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0))
    };
    let lo = lo.max(floor);
    let hi = hi.max(floor);
    v_lo * v_lo.transpose() * lo + v_hi * v_hi.transpose() * hi
}

impl Gaussian2 {
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Self {
        Gaussian2 {
            mean,
            cov: make_spd(&cov),
        }
    }

    pub fn isotropic(mean: Vector2<f64>, sigma: f64) -> Self {
        Gaussian2::new(mean, Matrix2::identity() * sigma * sigma)
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite()) && is_spd(&self.cov)
    }

    /// Pushes the distribution through a rigid transform.
    pub fn transformed(&self, pose: &crate::geometry::Pose2) -> Gaussian2 {
        let r = pose.rotation();
        Gaussian2::new(pose.transform_point(&self.mean), r * self.cov * r.transpose())
    }
}

/// Bhattacharyya distance between two bivariate Gaussians.
pub fn bhattacharyya_distance(a: &Gaussian2, b: &Gaussian2) -> Result<f64> {
    if !is_spd(&a.cov) || !is_spd(&b.cov) {
        return Err(Error::NotPositiveDefinite);
    }
    let s = (a.cov + b.cov) * 0.5;
    let det_s = s.determinant();
    let det_a = a.cov.determinant();
    let det_b = b.cov.determinant();
    let inv = s.try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let d = a.mean - b.mean;
    let mahal = (d.transpose() * inv * d)[(0, 0)];
    let shape = 0.5 * (det_s / (det_a * det_b).sqrt()).ln();
    Ok((0.125 * mahal + shape).max(0.0))
}
