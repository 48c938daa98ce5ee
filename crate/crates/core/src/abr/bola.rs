//! Buffer-based Lyapunov rule.
//!
//! Rung `m` scores `(V * (u_m + gp) - Q) / S_m` where `S_m` is the segment
//! size, `u_m = ln(S_m / S_0)` and `Q` is the buffer level in segments.
//!
//! Calibration. Write `r_m = S_m / S_0` and `rho_m = S_m / S_top`.
//!
//! * Rung 0 beats rung `m` iff `gp - Q/V >= u_m / (r_m - 1)`. With
//!   `g* = max_m u_m / (r_m - 1)` and `gp = Q_min / V + g*`, rung 0 wins for
//!   every `Q <= Q_min`.
//! * The top rung beats rung `m` iff `Q/V - gp >= d_m` with
//!   `d_m = (u_m - rho_m * u_top) / (1 - rho_m)`. With `d* = max_m d_m`,
//!   substituting `gp` gives `Q >= Q_min + V * (d* + g*)`, so
//!   `V = (Q_t - Q_min) / (d* + g*)` makes the top rung win for every
//!   `Q >= Q_t`.
//!
//! `Q_min` is one chunk of buffer and `Q_t` one chunk short of the buffer
//! target. The scheduler stops fetching below top quality once the buffer
//! reaches the target, so decisions are always taken just under it.

use serde::{Deserialize, Serialize};

use crate::media::StreamTimeline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BolaParams {
    pub sizes: Vec<f64>,
    pub utilities: Vec<f64>,
    pub v: f64,
    pub gp: f64,
    pub segment_duration_s: f64,
}

impl BolaParams {
    /// `sizes` are segment sizes in bytes, ascending.
    pub fn calibrate(sizes: &[f64], timeline: &StreamTimeline, buffer_target_s: f64) -> Self {
        assert!(!sizes.is_empty());
        let seg = timeline.segment_duration_s;
        let utilities: Vec<f64> = sizes.iter().map(|s| (s / sizes[0]).ln()).collect();
        let q_min = timeline.chunk_duration_s / seg;
        let q_t = ((buffer_target_s - timeline.chunk_duration_s) / seg).max(2.0 * q_min);
        let n = sizes.len();
        let (v, gp) = match n {
            1 => (1.0, 0.0),
            2 => {
                // One crossover only: place it mid-way between the anchors.
                let g = utilities[1] / (sizes[1] / sizes[0] - 1.0);
                (1.0, g + (q_min + q_t) / 2.0)
            }
            _ => {
                let top = n - 1;
                let g_star = (1..n)
                    .map(|m| utilities[m] / (sizes[m] / sizes[0] - 1.0))
                    .fold(f64::NEG_INFINITY, f64::max);
                let d_star = (0..top)
                    .map(|m| {
                        let rho = sizes[m] / sizes[top];
                        (utilities[m] - utilities[top] * rho) / (1.0 - rho)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                let span = d_star + g_star;
                if !(span > 0.0) {
                    return Self::from_parts(sizes, utilities, 1.0, q_min + g_star, seg);
                }
                // Small margins on both anchors so neither ends in an exact tie
                // that rounding could tip the wrong way.
                let eps = 1e-9;
                let v = (q_t - q_min) / span * (1.0 - eps);
                (v, q_min / v + g_star + span * eps / 2.0)
            }
        };
        Self::from_parts(sizes, utilities, v, gp, seg)
    }

    fn from_parts(sizes: &[f64], utilities: Vec<f64>, v: f64, gp: f64, seg: f64) -> Self {
        Self {
            sizes: sizes.to_vec(),
            utilities,
            v,
            gp,
            segment_duration_s: seg,
        }
    }

    pub fn score(&self, m: usize, buffer_s: f64) -> f64 {
        let q = buffer_s / self.segment_duration_s;
        (self.v * (self.utilities[m] + self.gp) - q) / self.sizes[m]
    }
}

/// Argmax of the score; ties go to the lower index.
pub fn bola_decide(buffer_s: f64, params: &BolaParams) -> usize {
    let mut best = 0;
    let mut best_score = params.score(0, buffer_s);
    for m in 1..params.sizes.len() {
        let s = params.score(m, buffer_s);
        if s > best_score {
            best = m;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{default_ladder, segment_bytes};
    use proptest::prelude::*;

    fn table_params(target: f64) -> BolaParams {
        let tl = StreamTimeline::live_default();
        let sizes: Vec<f64> = default_ladder()
            .video
            .iter()
            .map(|r| segment_bytes(r, &tl) as f64)
            .collect();
        BolaParams::calibrate(&sizes, &tl, target)
    }

    fn oracle(buffer_s: f64, p: &BolaParams) -> usize {
        let q = buffer_s / p.segment_duration_s;
        let scores: Vec<f64> = (0..p.sizes.len())
            .map(|m| (p.v * ((p.sizes[m] / p.sizes[0]).ln() + p.gp) - q) / p.sizes[m])
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scores.iter().position(|&s| s == max).unwrap()
    }

    #[test]
    fn single_rung() {
        let tl = StreamTimeline::live_default();
        let p = BolaParams::calibrate(&[1000.0], &tl, 8.0);
        for b in [0.0, 3.0, 30.0] {
            assert_eq!(bola_decide(b, &p), 0);
        }
    }

    #[test]
    fn two_point_anchors() {
        for target in [3.0f64, 5.5, 8.0, 12.0, 15.0] {
            let p = table_params(target.min(12.0));
            assert_eq!(bola_decide(0.0, &p), 0);
            assert_eq!(bola_decide(0.96, &p), 0);
            let full = target.min(12.0);
            assert_eq!(bola_decide(full - 0.96, &p), 8, "target {target}");
            assert_eq!(bola_decide(full - 0.5, &p), 8, "target {target}");
            assert!(bola_decide(full - 1.0, &p) < 8, "target {target}");
            assert_eq!(bola_decide(40.0, &p), 8);
        }
    }

    #[test]
    fn two_rung_ladder_switches_between_anchors() {
        let tl = StreamTimeline::live_default();
        let p = BolaParams::calibrate(&[1000.0, 4000.0], &tl, 8.0);
        assert_eq!(bola_decide(0.0, &p), 0);
        assert_eq!(bola_decide(8.0, &p), 1);
    }

    #[test]
    fn monotone_in_buffer() {
        let p = table_params(8.0);
        let mut prev = 0;
        for i in 0..200 {
            let d = bola_decide(i as f64 * 0.05, &p);
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn brute_force_on_random_contexts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let tl = StreamTimeline::live_default();
        for _ in 0..1000 {
            let n = rng.random_range(1..10);
            let mut sizes: Vec<f64> = (0..n)
                .map(|_| rng.random_range(1_000.0..3_000_000.0))
                .collect();
            sizes.sort_by(f64::total_cmp);
            sizes.dedup();
            let p = BolaParams::calibrate(&sizes, &tl, rng.random_range(1.0..15.0));
            let b = rng.random_range(0.0..20.0);
            assert_eq!(bola_decide(b, &p), oracle(b, &p));
        }
    }

    proptest! {
        #[test]
        fn matches_oracle(buffer in 0.0f64..30.0, target in 0.5f64..15.0) {
            let p = table_params(target);
            prop_assert_eq!(bola_decide(buffer, &p), oracle(buffer, &p));
        }
    }
}
