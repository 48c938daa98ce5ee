//! Session quality scoring and export for an external P.1203 mode-0 model.
//!
//! [`internal_mos`] is a small comparator with a quality term, a stall term
//! and a switching term. It has no absolute-latency term; latency only matters
//! through the stalls it causes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::Ladder;
use crate::metrics::stall_summary;
use crate::player::{Event, SessionLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeSegment {
    pub bitrate_kbps: f64,
    pub duration_s: f64,
    pub start_s: f64,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub codec: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoeInput {
    pub segments: Vec<QoeSegment>,
    /// `(media position, duration)`; the initial load is not included.
    pub stalls: Vec<(f64, f64)>,
    pub audio_bitrate_kbps: f64,
}

impl QoeInput {
    pub fn from_log(log: &SessionLog) -> Result<Self> {
        let (_, ladder, _, _) = log
            .start()
            .ok_or_else(|| Error::LogCorruption("missing session start".into()))?;
        let segments = log
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Playout {
                    rep,
                    media_start_s,
                    media_end_s,
                    ..
                } => {
                    let r = ladder.video.get(*rep)?;
                    Some(QoeSegment {
                        bitrate_kbps: r.bitrate_kbps_f64(),
                        duration_s: media_end_s - media_start_s,
                        start_s: *media_start_s,
                        width: r.width,
                        height: r.height,
                        fps: r.fps,
                        codec: "h264".into(),
                    })
                }
                _ => None,
            })
            .collect();
        let stalls = stall_summary(log)?
            .stalls
            .iter()
            .map(|s| (s.media_s, s.duration_s))
            .collect();
        Ok(Self {
            segments,
            stalls,
            audio_bitrate_kbps: ladder.audio.bitrate_kbps_f64(),
        })
    }

    pub fn played_s(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_s).sum()
    }

    pub fn stall_s(&self) -> f64 {
        self.stalls.iter().map(|s| s.1).sum()
    }

    /// Bitrate changes between consecutive played stretches.
    pub fn switches(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].bitrate_kbps != w[1].bitrate_kbps)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MosScore(f64);

impl MosScore {
    pub fn new(v: f64) -> Self {
        Self(v.clamp(1.0, 5.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `1 + 4 * max(0, U - 0.5 * sqrt(stall_fraction) - 0.1 * switch_rate)`,
/// where `U` is the duration-weighted log-bitrate utility scaled to `[0, 1]`
/// over the ladder and `switch_rate` is switches per minute divided by six.
pub fn internal_mos(input: &QoeInput, ladder: &Ladder) -> Result<MosScore> {
    let played = input.played_s();
    if input.segments.is_empty() || !(played > 0.0) {
        return Err(Error::EmptyQoeInput);
    }
    let b_min = ladder.video[0].bitrate_kbps_f64();
    let b_max = ladder.video[ladder.top()].bitrate_kbps_f64();
    let span = (b_max / b_min).ln();
    let utility = input
        .segments
        .iter()
        .map(|s| {
            let u = if span > 0.0 {
                (s.bitrate_kbps / b_min).ln() / span
            } else {
                1.0
            };
            u.clamp(0.0, 1.0) * s.duration_s
        })
        .sum::<f64>()
        / played;
    let stall = input.stall_s();
    let stall_fraction = stall / (stall + played);
    let switch_rate = input.switches() as f64 / (played / 60.0) / 6.0;
    let core = utility - 0.5 * stall_fraction.sqrt() - 0.1 * switch_rate;
    Ok(MosScore::new(1.0 + 4.0 * core.max(0.0)))
}

/// Mode-0 input document: video segments, audio descriptor and stall list.
pub fn p1203_json(input: &QoeInput) -> serde_json::Value {
    let video: Vec<serde_json::Value> = input
        .segments
        .iter()
        .map(|s| {
            serde_json::json!({
                "bitrate": s.bitrate_kbps,
                "codec": s.codec,
                "duration": s.duration_s,
                "fps": s.fps,
                "resolution": format!("{}x{}", s.width, s.height),
                "start": s.start_s,
            })
        })
        .collect();
    let audio: Vec<serde_json::Value> = input
        .segments
        .iter()
        .map(|s| {
            serde_json::json!({
                "bitrate": input.audio_bitrate_kbps,
                "codec": "aaclc",
                "duration": s.duration_s,
                "start": s.start_s,
            })
        })
        .collect();
    let stalling: Vec<[f64; 2]> = input.stalls.iter().map(|&(p, d)| [p, d]).collect();
    serde_json::json!({
        "I11": { "segments": audio, "streamId": 1 },
        "I13": { "segments": video, "streamId": 1 },
        "I23": { "stalling": stalling, "streamId": 1 },
        "IGen": { "device": "pc", "displaySize": "1920x1080", "viewingDistance": "150cm" },
    })
}

pub fn export_p1203(log: &SessionLog, path: &Path) -> Result<()> {
    let input = QoeInput::from_log(log)?;
    let text = serde_json::to_string_pretty(&p1203_json(&input))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::default_ladder;
    use proptest::prelude::*;

    fn seg(kbps: f64, dur: f64) -> QoeSegment {
        QoeSegment {
            bitrate_kbps: kbps,
            duration_s: dur,
            start_s: 0.0,
            width: 1,
            height: 1,
            fps: 25,
            codec: "h264".into(),
        }
    }

    fn input(segs: Vec<QoeSegment>, stalls: Vec<(f64, f64)>) -> QoeInput {
        QoeInput {
            segments: segs,
            stalls,
            audio_bitrate_kbps: 128.0,
        }
    }

    #[test]
    fn mos_extremes() {
        let l = default_ladder();
        let top = input(vec![seg(5468.0, 3.84); 10], vec![]);
        assert_eq!(internal_mos(&top, &l).unwrap().value(), 5.0);
        let bottom = input(vec![seg(86.0, 3.84); 10], vec![]);
        assert_eq!(internal_mos(&bottom, &l).unwrap().value(), 1.0);
        assert!(matches!(
            internal_mos(&input(vec![], vec![]), &l),
            Err(Error::EmptyQoeInput)
        ));
    }

    #[test]
    fn mos_worked_example() {
        let l = default_ladder();
        // A constant bitrate with U = 0.64 and a 4% stall fraction.
        let b = 86.0 * (5468.0f64 / 86.0).powf(0.64);
        let played = 96.0;
        let stall = played * 0.04 / 0.96;
        let inp = input(vec![seg(b, played)], vec![(10.0, stall)]);
        let m = internal_mos(&inp, &l).unwrap().value();
        assert!((m - 3.16).abs() < 1e-9, "{m}");
    }

    #[test]
    fn export_shape() {
        let mut segs = vec![seg(5468.0, 3.84); 3];
        for (i, s) in segs.iter_mut().enumerate() {
            s.start_s = i as f64 * 3.84;
            s.width = 1280;
            s.height = 720;
        }
        let j = p1203_json(&input(segs, vec![(2.0, 1.0), (5.0, 0.5)]));
        assert_eq!(j["I13"]["segments"].as_array().unwrap().len(), 3);
        assert_eq!(j["I13"]["segments"][0]["resolution"], "1280x720");
        assert_eq!(j["I13"]["segments"][0]["codec"], "h264");
        assert_eq!(j["I11"]["segments"][0]["codec"], "aaclc");
        assert_eq!(j["I11"]["segments"][0]["bitrate"], 128.0);
        assert_eq!(j["I23"]["stalling"].as_array().unwrap().len(), 2);
        assert_eq!(j["I23"]["stalling"][1][1], 0.5);
    }

    proptest! {
        #[test]
        fn mos_bounded_and_monotone(
            rates in prop::collection::vec(86.0f64..5468.0, 1..30),
            stall in 0.0f64..500.0,
            extra in 0.0f64..100.0,
            factor in 1.0f64..3.0,
        ) {
            let l = default_ladder();
            let segs: Vec<QoeSegment> = rates.iter().map(|&r| seg(r, 3.84)).collect();
            let base = internal_mos(&input(segs.clone(), vec![(0.0, stall)]), &l).unwrap().value();
            prop_assert!((1.0..=5.0).contains(&base));
            let worse = internal_mos(&input(segs.clone(), vec![(0.0, stall + extra)]), &l).unwrap().value();
            prop_assert!(worse <= base + 1e-12);
            // Scale every bitrate up; compare only when the switch count is unchanged.
            let better: Vec<QoeSegment> = segs.iter().map(|s| seg((s.bitrate_kbps * factor).min(5468.0), 3.84)).collect();
            let same_pattern = better.windows(2).filter(|w| w[0].bitrate_kbps != w[1].bitrate_kbps).count()
                == segs.windows(2).filter(|w| w[0].bitrate_kbps != w[1].bitrate_kbps).count();
            if same_pattern {
                let up = internal_mos(&input(better, vec![(0.0, stall)]), &l).unwrap().value();
                prop_assert!(up >= base - 1e-12);
            }
        }
    }
}
