//! Online-learning rule over a weight vector on the ladder.
//!
//! Each update takes a projected gradient step on
//! `f(w) = (B/r - 1) * B / b_top + lambda * max(0, L_pred - target)` where
//! `B = sum w_i b_i`, `r` is the last measured throughput and
//! `L_pred = latency + seg_dur * (B/r - 1)` is the latency after fetching one
//! segment at `B`. The decision is the highest rung not above `B`.

use serde::{Deserialize, Serialize};

use super::simplex::simplex_project;
use super::{highest_at_most, AbrContext, AbrOutcome, AbrTuning, StateUpdate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2AVariant {
    /// Learns from whatever sample is most recent, on every call.
    Original,
    /// Learns once per media segment and never from init segments.
    Modified,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2AState {
    pub w: Vec<f64>,
    /// Highest media segment index whose sample has been learned from.
    pub last_consumed_seg: Option<usize>,
    pub cached_decision: usize,
    pub step_count: u64,
    pub variant: L2AVariant,
    eta: f64,
    lambda: f64,
}

impl L2AState {
    pub fn new(n_rungs: usize, variant: L2AVariant, tuning: &AbrTuning) -> Self {
        let mut w = vec![0.0; n_rungs];
        w[0] = 1.0;
        Self {
            w,
            last_consumed_seg: None,
            cached_decision: 0,
            step_count: 0,
            variant,
            eta: tuning.l2a_eta,
            lambda: tuning.l2a_lambda,
        }
    }

    pub fn expected_bitrate(&self, bitrates_kbps: &[f64]) -> f64 {
        self.w.iter().zip(bitrates_kbps).map(|(w, b)| w * b).sum()
    }

    pub fn decide(&mut self, ctx: &AbrContext<'_>) -> AbrOutcome {
        let cached = AbrOutcome {
            rep: self.cached_decision,
            update: None,
        };
        let Some(sample) = ctx.last_sample else {
            return cached;
        };
        if self.variant == L2AVariant::Modified {
            let seen = self
                .last_consumed_seg
                .is_some_and(|s| sample.source.seg_index <= s);
            if sample.is_init() || seen {
                return cached;
            }
            self.last_consumed_seg = Some(sample.source.seg_index);
        }
        self.step(ctx, sample.kbps);
        AbrOutcome {
            rep: self.cached_decision,
            update: Some(StateUpdate {
                source: sample.source,
                request_id: sample.request_id,
                sample_kbps: sample.kbps,
            }),
        }
    }

    fn step(&mut self, ctx: &AbrContext<'_>, rate_kbps: f64) {
        let b = ctx.bitrates_kbps;
        let top = b[b.len() - 1];
        let r = rate_kbps.max(1e-9);
        let big_b = self.expected_bitrate(b);
        let pred = ctx.live_latency_s + ctx.segment_duration_s * (big_b / r - 1.0);
        let over = pred > ctx.target_latency_s;
        self.step_count += 1;
        let lr = self.eta / (self.step_count as f64).sqrt();
        let moved: Vec<f64> = self
            .w
            .iter()
            .zip(b)
            .map(|(w, bi)| {
                let mut g = bi / top * (2.0 * big_b / r - 1.0);
                if over {
                    g += self.lambda * ctx.segment_duration_s * bi / r;
                }
                w - lr * g
            })
            .collect();
        self.w = simplex_project(&moved);
        self.cached_decision = highest_at_most(b, self.expected_bitrate(b));
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{ctx, table_rates};
    use super::*;
    use crate::media::SegmentRef;
    use crate::throughput::ThroughputSample;
    use proptest::prelude::*;

    fn sample(seg: usize, kbps: f64, is_init: bool) -> ThroughputSample {
        ThroughputSample {
            request_id: seg as u64 * 2 + is_init as u64,
            source: SegmentRef {
                seg_index: seg,
                rep: 0,
                is_init,
            },
            bits: kbps * 1000.0,
            active_transfer_s: 1.0,
            kbps,
        }
    }

    fn run(state: &mut L2AState, rates: &[f64], s: &ThroughputSample) -> AbrOutcome {
        let mut c = ctx(rates, 3.0, 1000.0);
        c.last_sample = Some(s);
        state.decide(&c)
    }

    #[test]
    fn modified_ignores_repeated_segment() {
        let r = table_rates();
        let mut st = L2AState::new(9, L2AVariant::Modified, &AbrTuning::default());
        let s = sample(0, 6000.0, false);
        let first = run(&mut st, &r, &s);
        assert!(first.update.is_some());
        let w = st.w.clone();
        let second = run(&mut st, &r, &s);
        assert!(second.update.is_none());
        assert_eq!(second.rep, first.rep);
        assert_eq!(st.w, w);
    }

    #[test]
    fn modified_ignores_init() {
        let r = table_rates();
        let mut st = L2AState::new(9, L2AVariant::Modified, &AbrTuning::default());
        let out = run(&mut st, &r, &sample(3, 80.0, true));
        assert!(out.update.is_none());
        assert_eq!(st.step_count, 0);
    }

    #[test]
    fn original_updates_on_repeats() {
        let r = table_rates();
        let mut st = L2AState::new(9, L2AVariant::Original, &AbrTuning::default());
        let s = sample(0, 6000.0, false);
        run(&mut st, &r, &s);
        run(&mut st, &r, &s);
        assert_eq!(st.step_count, 2);
    }

    #[test]
    fn converges_upward_on_high_samples() {
        let r = table_rates();
        let mut st = L2AState::new(9, L2AVariant::Modified, &AbrTuning::default());
        for seg in 0..20 {
            run(&mut st, &r, &sample(seg, 6000.0, false));
        }
        assert!(r[st.cached_decision] >= 2811.0, "{}", st.cached_decision);
    }

    #[test]
    fn init_sample_drives_original_down() {
        let r = table_rates();
        let mut st = L2AState::new(9, L2AVariant::Original, &AbrTuning::default());
        for seg in 0..20 {
            run(&mut st, &r, &sample(seg, 6000.0, false));
        }
        assert!(st.cached_decision >= 7);
        let out = run(&mut st, &r, &sample(20, 80.0, true));
        assert_eq!(out.rep, 0);
    }

    proptest! {
        #[test]
        fn weights_stay_on_simplex(rates in prop::collection::vec((10.0f64..20_000.0, any::<bool>()), 1..60), lat in 0.0f64..20.0) {
            let r = table_rates();
            for variant in [L2AVariant::Original, L2AVariant::Modified] {
                let mut st = L2AState::new(9, variant, &AbrTuning::default());
                for (i, (kbps, init)) in rates.iter().enumerate() {
                    let s = sample(i / 2, *kbps, *init);
                    let mut c = ctx(&r, 2.0, 1000.0);
                    c.live_latency_s = lat;
                    c.last_sample = Some(&s);
                    let out = st.decide(&c);
                    prop_assert!(out.rep < 9);
                    prop_assert!(st.w.iter().all(|&x| x >= 0.0));
                    prop_assert!((st.w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn modified_updates_bounded_by_segments(segs in prop::collection::vec(0usize..30, 1..80)) {
            let r = table_rates();
            let mut st = L2AState::new(9, L2AVariant::Modified, &AbrTuning::default());
            let mut unique = std::collections::BTreeSet::new();
            for seg in segs {
                unique.insert(seg);
                run(&mut st, &r, &sample(seg, 2000.0, false));
            }
            prop_assert!(st.step_count as usize <= unique.len());
        }
    }
}
