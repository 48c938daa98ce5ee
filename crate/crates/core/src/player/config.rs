use serde::{Deserialize, Serialize};

use crate::abr::{AbrTuning, Algorithm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatchupMode {
    Default,
    Lolp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlayerConfig {
    pub target_latency_s: f64,
    pub max_drift_s: f64,
    pub max_playback_rate_delta: f64,
    pub scheduler_timeout_s: f64,
    pub stable_buffer_time_s: f64,
    pub fast_switching: bool,
    /// Replacement threshold in segment durations.
    pub fast_switch_buffer_segments: f64,
    pub abr: Algorithm,
    /// `None` picks the algorithm's own controller.
    pub catchup: Option<CatchupMode>,
    pub catchup_gain: f64,
    pub catchup_deadband_s: f64,
    /// Buffer below which the LoL+ controller slows down.
    pub lolp_buffer_floor_s: f64,
    pub resume_buffer_s: f64,
    pub sample_interval_s: f64,
    pub throughput_window: usize,
    pub bootstrap_kbps: f64,
    pub tuning: AbrTuning,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        Self {
            target_latency_s: 3.0,
            max_drift_s: 5.0,
            max_playback_rate_delta: 0.17,
            scheduler_timeout_s: 0.3,
            stable_buffer_time_s: 12.0,
            fast_switching: false,
            fast_switch_buffer_segments: 1.5,
            abr: Algorithm::Dynamic,
            catchup: None,
            catchup_gain: 0.5,
            catchup_deadband_s: 0.05,
            lolp_buffer_floor_s: 0.96,
            resume_buffer_s: 0.96,
            sample_interval_s: 0.5,
            throughput_window: 3,
            bootstrap_kbps: 86.0,
            tuning: AbrTuning::default(),
        }
    }
}

impl PlayerConfig {
    pub fn new(abr: Algorithm, target_latency_s: f64) -> Self {
        Self {
            abr,
            target_latency_s,
            ..Self::default()
        }
    }

    pub fn effective_catchup(&self) -> CatchupMode {
        self.catchup.unwrap_or(match self.abr {
            Algorithm::Lolp => CatchupMode::Lolp,
            _ => CatchupMode::Default,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.target_latency_s > 0.0) {
            return bad("target_latency_s must be positive");
        }
        if !(self.max_playback_rate_delta > 0.0 && self.max_playback_rate_delta < 1.0) {
            return bad("max_playback_rate_delta must lie in (0, 1)");
        }
        if !(self.scheduler_timeout_s > 0.0) {
            return bad("scheduler_timeout_s must be positive");
        }
        if !(self.sample_interval_s > 0.0) {
            return bad("sample_interval_s must be positive");
        }
        if !(self.max_drift_s > 0.0) || !(self.resume_buffer_s > 0.0) {
            return bad("max_drift_s and resume_buffer_s must be positive");
        }
        if self.throughput_window == 0 {
            return bad("throughput_window must be at least 1");
        }
        if !(self.bootstrap_kbps > 0.0) {
            return bad("bootstrap_kbps must be positive");
        }
        Ok(())
    }
}
