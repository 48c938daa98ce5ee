//! Heuristic QoE scorer.
//!
//! For each rung the next segment's download time is predicted from the
//! smoothed throughput; the shortfall against the current buffer is the
//! predicted rebuffering, which also adds to latency.

use serde::{Deserialize, Serialize};

use super::AbrContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LolpModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl Default for LolpModel {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.5,
            sigma: 0.5,
        }
    }
}

impl LolpModel {
    pub fn score(&self, ctx: &AbrContext<'_>, m: usize) -> f64 {
        let b = ctx.bitrates_kbps;
        let download_s = b[m] * ctx.segment_duration_s / ctx.swma_kbps;
        let rebuffer_s = (download_s - ctx.buffer_s).max(0.0);
        let latency = ctx.live_latency_s + rebuffer_s;
        let prev = b[ctx.previous_decision.min(b.len() - 1)];
        self.alpha * (b[m] / b[0]).ln()
            - self.beta * rebuffer_s
            - self.gamma * (latency - ctx.target_latency_s).abs()
            - self.sigma * (b[m] / prev).ln().abs()
    }
}

/// Argmax of [`LolpModel::score`]; ties go to the lower index.
pub fn lolp_decide(ctx: &AbrContext<'_>, model: &LolpModel) -> usize {
    let mut best = 0;
    let mut best_score = model.score(ctx, 0);
    for m in 1..ctx.bitrates_kbps.len() {
        let s = model.score(ctx, m);
        if s > best_score {
            best = m;
            best_score = s;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{ctx, table_rates};
    use super::*;
    use proptest::prelude::*;

    fn oracle(c: &AbrContext<'_>, w: &LolpModel) -> usize {
        let b = c.bitrates_kbps;
        let scores: Vec<f64> = b
            .iter()
            .map(|&bm| {
                let dl = bm * c.segment_duration_s / c.swma_kbps;
                let rb = if dl > c.buffer_s {
                    dl - c.buffer_s
                } else {
                    0.0
                };
                w.alpha * (bm / b[0]).ln()
                    - w.beta * rb
                    - w.gamma * (c.live_latency_s + rb - c.target_latency_s).abs()
                    - w.sigma * (bm / b[c.previous_decision]).ln().abs()
            })
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        scores.iter().position(|&s| s == max).unwrap()
    }

    #[test]
    fn unlimited_throughput_picks_top() {
        let r = table_rates();
        let m = LolpModel {
            sigma: 0.0,
            ..LolpModel::default()
        };
        assert_eq!(lolp_decide(&ctx(&r, 1.0, f64::INFINITY), &m), 8);
    }

    #[test]
    fn matches_oracle_at_500kbps() {
        let r = table_rates();
        let c = ctx(&r, 1.0, 500.0);
        let m = LolpModel::default();
        assert_eq!(lolp_decide(&c, &m), oracle(&c, &m));
    }

    #[test]
    fn switch_cost_keeps_previous() {
        let r = [100.0, 110.0];
        let mut c = ctx(&r, 10.0, 10_000.0);
        let no_switch = LolpModel {
            sigma: 0.0,
            ..LolpModel::default()
        };
        assert_eq!(lolp_decide(&c, &no_switch), 1);
        // Switch cost above the bitrate reward pins the previous rung.
        let m = LolpModel {
            sigma: 1.5,
            ..LolpModel::default()
        };
        assert_eq!(lolp_decide(&c, &m), 0);
        c.previous_decision = 1;
        assert_eq!(lolp_decide(&c, &m), 1);
    }

    #[test]
    fn brute_force_on_random_contexts() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let r = table_rates();
        let m = LolpModel::default();
        for _ in 0..1000 {
            let mut c = ctx(
                &r,
                rng.random_range(0.0..20.0),
                rng.random_range(20.0..20_000.0),
            );
            c.live_latency_s = rng.random_range(0.0..25.0);
            c.target_latency_s = [3.0, 5.5, 8.0, 15.0][rng.random_range(0..4)];
            c.previous_decision = rng.random_range(0..9);
            assert_eq!(lolp_decide(&c, &m), oracle(&c, &m));
        }
    }

    proptest! {
        #[test]
        fn always_valid(buffer in 0.0f64..30.0, swma in 1.0f64..50_000.0, prev in 0usize..9) {
            let r = table_rates();
            let mut c = ctx(&r, buffer, swma);
            c.previous_decision = prev;
            prop_assert!(lolp_decide(&c, &LolpModel::default()) < 9);
        }
    }
}
