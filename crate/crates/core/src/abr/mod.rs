//! Bitrate adaptation rules.
//!
//! Each algorithm is a pure function of an [`AbrContext`] plus its own state
//! value; [`AbrState`] bundles the state for whichever rule a session runs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::media::{segment_bytes, Ladder, SegmentRef, StreamTimeline};
use crate::throughput::ThroughputSample;

pub mod bola;
pub mod dynamic;
pub mod l2a;
pub mod lolp;
pub mod simplex;

pub use bola::{bola_decide, BolaParams};
pub use dynamic::DynamicState;
pub use l2a::{L2AState, L2AVariant};
pub use lolp::{lolp_decide, LolpModel};
pub use simplex::simplex_project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Dynamic,
    L2aOriginal,
    L2aModified,
    Lolp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Dynamic,
        Algorithm::L2aOriginal,
        Algorithm::L2aModified,
        Algorithm::Lolp,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::Dynamic => "dynamic",
            Algorithm::L2aOriginal => "l2a_original",
            Algorithm::L2aModified => "l2a_modified",
            Algorithm::Lolp => "lolp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.id() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

/// Why the decision function was called.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionTrigger {
    /// A throughput sample arrived since the previous call.
    NewSample,
    /// Scheduler tick with no fresh sample.
    SchedulerRepeat,
}

#[derive(Debug, Clone, Copy)]
pub struct AbrContext<'a> {
    pub buffer_s: f64,
    pub live_latency_s: f64,
    pub target_latency_s: f64,
    pub last_sample: Option<&'a ThroughputSample>,
    pub swma_kbps: f64,
    /// Video bitrates in kbps, ascending.
    pub bitrates_kbps: &'a [f64],
    pub segment_duration_s: f64,
    pub previous_decision: usize,
    pub trigger: DecisionTrigger,
}

/// Tunable constants for all rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbrTuning {
    pub throughput_safety: f64,
    pub switch_buffer_s: f64,
    pub switch_hysteresis_s: f64,
    /// Dynamic only: cap at `safety * swma * buffer / segment_duration`,
    /// rung 0 on an empty buffer. `None` turns the guard off.
    pub insufficient_buffer_safety: Option<f64>,
    pub l2a_eta: f64,
    pub l2a_lambda: f64,
    pub lolp: LolpModel,
}

impl Default for AbrTuning {
    fn default() -> Self {
        Self {
            throughput_safety: 0.9,
            switch_buffer_s: 10.0,
            switch_hysteresis_s: 1.0,
            insufficient_buffer_safety: Some(0.5),
            l2a_eta: 0.5,
            l2a_lambda: 1.0,
            lolp: LolpModel::default(),
        }
    }
}

/// Highest rung at or below `safety * swma_kbps`; rung 0 if none fits.
pub fn throughput_rule(swma_kbps: f64, bitrates_kbps: &[f64], safety: f64) -> usize {
    highest_at_most(bitrates_kbps, safety * swma_kbps)
}

pub(crate) fn highest_at_most(bitrates_kbps: &[f64], budget_kbps: f64) -> usize {
    bitrates_kbps
        .iter()
        .rposition(|&b| b <= budget_kbps)
        .unwrap_or(0)
}

/// Recorded when a decision changed learned state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub source: SegmentRef,
    pub request_id: u64,
    pub sample_kbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbrOutcome {
    pub rep: usize,
    pub update: Option<StateUpdate>,
}

#[derive(Debug, Clone)]
pub enum AbrState {
    Dynamic(DynamicState),
    L2A(L2AState),
    Lolp(LolpModel),
}

impl AbrState {
    /// Fresh state for `algorithm`. `buffer_target_s` feeds the BOLA
    /// calibration and is normally `min(target latency, stable buffer)`.
    pub fn new(
        algorithm: Algorithm,
        ladder: &Ladder,
        timeline: &StreamTimeline,
        buffer_target_s: f64,
        tuning: &AbrTuning,
    ) -> Self {
        match algorithm {
            Algorithm::Dynamic => {
                let sizes: Vec<f64> = ladder
                    .video
                    .iter()
                    .map(|r| segment_bytes(r, timeline) as f64)
                    .collect();
                let bola = BolaParams::calibrate(&sizes, timeline, buffer_target_s);
                AbrState::Dynamic(DynamicState::new(bola, tuning))
            }
            Algorithm::L2aOriginal => AbrState::L2A(L2AState::new(
                ladder.video.len(),
                L2AVariant::Original,
                tuning,
            )),
            Algorithm::L2aModified => AbrState::L2A(L2AState::new(
                ladder.video.len(),
                L2AVariant::Modified,
                tuning,
            )),
            Algorithm::Lolp => AbrState::Lolp(tuning.lolp.clone()),
        }
    }

    pub fn decide(&mut self, ctx: &AbrContext<'_>) -> AbrOutcome {
        match self {
            AbrState::Dynamic(s) => AbrOutcome {
                rep: s.decide(ctx),
                update: None,
            },
            AbrState::L2A(s) => s.decide(ctx),
            AbrState::Lolp(m) => AbrOutcome {
                rep: lolp_decide(ctx, m),
                update: None,
            },
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::table_rates;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn throughput_rule_scan() {
        let r = table_rates();
        assert_eq!(throughput_rule(3000.0, &r, 0.9), 6);
        assert_eq!(throughput_rule(50.0, &r, 0.9), 0);
        assert_eq!(throughput_rule(10_000.0, &r, 0.9), 8);
    }

    #[test]
    fn algorithm_ids_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.id().parse::<Algorithm>().unwrap(), a);
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                format!("\"{}\"", a.id())
            );
        }
        assert!("bola".parse::<Algorithm>().is_err());
    }

    proptest! {
        #[test]
        fn throughput_rule_scale_invariant(swma in 1.0f64..20_000.0, k in 1u32..6) {
            let r = table_rates();
            let scale = (1u32 << k) as f64;
            let scaled: Vec<f64> = r.iter().map(|b| b * scale).collect();
            prop_assert_eq!(
                throughput_rule(swma, &r, 0.9),
                throughput_rule(swma * scale, &scaled, 0.9)
            );
        }

        #[test]
        fn throughput_rule_valid_index(swma in 0.0f64..1e6) {
            let r = table_rates();
            prop_assert!(throughput_rule(swma, &r, 0.9) < r.len());
        }
    }
}
