//! Existence scores driven by hits and negative observations.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExistenceModel {
    /// Fraction of the remaining gap to 1 gained on a hit.
    pub gain: f64,
    /// Multiplicative decay applied on a miss inside the field of view.
    pub decay: f64,
    /// Cones below this score are deleted.
    pub epsilon: f64,
    pub initial: f64,
}

impl ExistenceModel {
    /// Chooses the decay so that a cone at existence 1.0 is deleted strictly
    /// before `reject_time_s` of consecutive misses at `frame_rate_hz`.
    pub fn for_rejection_time(frame_rate_hz: f64, reject_time_s: f64, epsilon: f64) -> Self {
        let frames = (reject_time_s * frame_rate_hz).ceil() as i64 - 1;
        let misses = frames.max(1) as f64;
        ExistenceModel {
            gain: 0.5,
            decay: epsilon.powf(1.0 / misses) * 0.999,
            epsilon,
            initial: 0.5,
        }
    }

    pub fn hit(&self, e: f64) -> f64 {
        (e + self.gain * (1.0 - e)).clamp(0.0, 1.0)
    }

    pub fn miss(&self, e: f64) -> f64 {
        (e * self.decay).clamp(0.0, 1.0)
    }

    pub fn alive(&self, e: f64) -> bool {
        e >= self.epsilon
    }

    /// Consecutive misses needed to delete a cone starting at `e`.
    pub fn misses_to_delete(&self, mut e: f64) -> usize {
        let mut n = 0;
        while self.alive(e) {
            e = self.miss(e);
            n += 1;
            if n > 10_000 {
                break;
            }
        }
        n
    }
}

impl Default for ExistenceModel {
    fn default() -> Self {
        ExistenceModel::for_rejection_time(10.0, 0.5, 0.05)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_false_positive_dies_within_half_second() {
        for rate in [5.0, 10.0, 15.0, 20.0, 30.0] {
            let m = ExistenceModel::for_rejection_time(rate, 0.5, 0.05);
            let n = m.misses_to_delete(1.0);
            assert!((n as f64) / rate < 0.5, "rate {rate}: {n} misses");
        }
    }

    #[test]
    fn alternating_hits_and_misses_stay_bounded() {
        let m = ExistenceModel::default();
        // Fixed point of e -> decay * (e + gain (1 - e)).
        let fixed = m.decay * m.gain / (1.0 - m.decay * (1.0 - m.gain));
        let mut e = 1.0;
        for _ in 0..200 {
            e = m.miss(m.hit(e));
            assert!(m.alive(e));
            assert!(e <= 1.0);
        }
        assert!((e - fixed).abs() < 1e-12);
        let mut e = m.initial;
        for _ in 0..200 {
            e = m.miss(m.hit(e));
        }
        assert!((e - fixed).abs() < 1e-12);
    }
}
