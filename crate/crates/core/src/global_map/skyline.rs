//! Symmetric positive-definite solver on a variable-band (skyline) layout.
//!
//! Row `i` stores the lower-triangle entries from its first structural
//! non-zero column up to the diagonal. Cholesky fill stays inside this
//! envelope, so the factorization works in place.

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub row: usize,
}

impl SkylineMatrix {
    /// `first[i]` is the first column that may be non-zero in row `i`.
    pub fn with_profile(first: Vec<usize>) -> Self {
        let rows = first
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                assert!(f <= i, "profile column beyond the diagonal");
                vec![0.0; i - f + 1]
            })
            .collect();
        SkylineMatrix { first, rows }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    /// Adds `v` to entry `(i, j)` of the symmetric matrix; `(j, i)` is implied.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let f = self.first[r];
        debug_assert!(c >= f, "entry ({r}, {c}) outside the profile");
        self.rows[r][c - f] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let f = self.first[r];
        if c < f {
            0.0
        } else {
            self.rows[r][c - f]
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        *self.rows[i].last().unwrap()
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        *self.rows[i].last_mut().unwrap() += v;
    }

    /// In-place `L Lᵀ` factorization.
    pub fn factor(mut self) -> Result<SkylineCholesky, NotPositiveDefinite> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            for j in fi..=i {
                let fj = self.first[j];
                let k0 = fi.max(fj);
                let mut s = self.rows[i][j - fi];
                if k0 < j {
                    let (ri, rj) = if j < i {
                        let (head, tail) = self.rows.split_at(i);
                        (&tail[0][k0 - fi..j - fi], &head[j][k0 - fj..j - fj])
                    } else {
                        let r = &self.rows[i][k0 - fi..j - fi];
                        (r, r)
                    };
                    s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j < i {
                    let d = *self.rows[j].last().unwrap();
                    self.rows[i][j - fi] = s / d;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(NotPositiveDefinite { row: i });
                    }
                    self.rows[i][j - fi] = s.sqrt();
                }
            }
        }
        Ok(SkylineCholesky { factor: self })
    }
}

#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    factor: SkylineMatrix,
}

impl SkylineCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.factor;
        let n = l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let f = l.first[i];
            let row = &l.rows[i];
            let s: f64 = row[..i - f].iter().zip(&y[f..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - f];
        }
        for i in (0..n).rev() {
            let f = l.first[i];
            let row = &l.rows[i];
            y[i] /= row[i - f];
            let xi = y[i];
            for (k, a) in (f..i).zip(&row[..i - f]) {
                y[k] -= a * xi;
            }
        }
        y
    }
}
