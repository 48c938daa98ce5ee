//! Measurements derived from session logs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::player::{Event, RequestKind, SessionLog};
use crate::qoe::{internal_mos, QoeInput};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StallRecord {
    pub start_s: f64,
    pub media_s: f64,
    pub duration_s: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StallSummary {
    pub count: usize,
    pub total_s: f64,
    pub stalls: Vec<StallRecord>,
}

pub fn stall_summary(log: &SessionLog) -> Result<StallSummary> {
    let mut open: Option<(f64, f64)> = None;
    let mut stalls = Vec::new();
    for e in &log.events {
        match e {
            Event::StallStart { t_wall_s, media_s } => {
                if open.is_some() {
                    return Err(Error::LogCorruption(format!(
                        "stall started at {t_wall_s} while another is open"
                    )));
                }
                open = Some((*t_wall_s, *media_s));
            }
            Event::StallEnd {
                t_wall_s,
                truncated,
                ..
            } => {
                let (start, media) = open.take().ok_or_else(|| {
                    Error::LogCorruption(format!("stall end at {t_wall_s} without a start"))
                })?;
                stalls.push(StallRecord {
                    start_s: start,
                    media_s: media,
                    duration_s: t_wall_s - start,
                    truncated: *truncated,
                });
            }
            _ => {}
        }
    }
    if let Some((start, _)) = open {
        return Err(Error::LogCorruption(format!(
            "stall started at {start} is never closed"
        )));
    }
    Ok(StallSummary {
        count: stalls.len(),
        total_s: stalls.iter().map(|s| s.duration_s).fold(0.0, |a, b| a + b),
        stalls,
    })
}

/// Wall time from first frame to session end; stalls included.
pub fn playback_time(log: &SessionLog) -> Result<f64> {
    let (ff, end, _) = log
        .end()
        .ok_or_else(|| Error::LogCorruption("missing session end".into()))?;
    let ff = ff.ok_or(Error::ZeroPlayback)?;
    let t = end - ff;
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::ZeroPlayback)
    }
}

/// Representation retained for each downloaded media segment: the first
/// completed, non-discarded download, overridden by an applied replacement.
pub fn retained_representations(log: &SessionLog) -> BTreeMap<usize, usize> {
    let mut kept = BTreeMap::new();
    for e in &log.events {
        match e {
            Event::RequestCompleted {
                kind: RequestKind::Media,
                seg_index,
                rep,
                discarded: false,
                ..
            } => {
                kept.entry(*seg_index).or_insert(*rep);
            }
            Event::ReplacementApplied { seg_index, rep, .. } => {
                kept.insert(*seg_index, *rep);
            }
            _ => {}
        }
    }
    kept
}

/// Download count per rung after duplicate removal.
pub fn rung_counts(log: &SessionLog, n_rungs: usize) -> Vec<usize> {
    let mut counts = vec![0; n_rungs];
    for rep in retained_representations(log).into_values() {
        counts[rep] += 1;
    }
    counts
}

/// `seg_dur / playback_time * sum_R N_R * B_R` in kbps.
pub fn mean_bitrate(log: &SessionLog) -> Result<f64> {
    let (_, ladder, timeline, _) = log
        .start()
        .ok_or_else(|| Error::LogCorruption("missing session start".into()))?;
    let t = playback_time(log)?;
    let counts = rung_counts(log, ladder.video.len());
    let weighted: f64 = counts
        .iter()
        .zip(&ladder.video)
        .map(|(n, r)| *n as f64 * r.bitrate_kbps_f64())
        .sum();
    Ok(timeline.segment_duration_s / t * weighted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentAccounting {
    pub unique: usize,
    pub total: usize,
    pub rerequest_pct: f64,
}

pub fn segment_accounting(log: &SessionLog) -> SegmentAccounting {
    let mut total = 0;
    let mut unique = BTreeSet::new();
    for e in &log.events {
        if let Event::RequestIssued {
            kind: RequestKind::Media | RequestKind::Replacement,
            seg_index,
            ..
        } = e
        {
            total += 1;
            unique.insert(*seg_index);
        }
    }
    let unique = unique.len();
    let rerequest_pct = if total == 0 {
        0.0
    } else {
        (total - unique) as f64 / total as f64 * 100.0
    };
    SegmentAccounting {
        unique,
        total,
        rerequest_pct,
    }
}

/// Box-plot summary. Quartiles are nearest-rank; whiskers reach the most
/// extreme observations within 1.5 IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl BoxStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = nearest_rank_sorted(&v, 0.25);
        let q3 = nearest_rank_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let lo = q1 - 1.5 * iqr;
        let hi = q3 + 1.5 * iqr;
        Some(Self {
            median: median_sorted(&v),
            q1,
            q3,
            whisker_low: *v.iter().find(|&&x| x >= lo).expect("q1 lies inside"),
            whisker_high: *v.iter().rev().find(|&&x| x <= hi).expect("q3 lies inside"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyDeviation {
    /// `(t_wall_s, latency - target)` at each sample.
    pub series: Vec<(f64, f64)>,
    pub stats: Option<BoxStats>,
    pub median_abs_s: f64,
}

pub fn latency_deviation(log: &SessionLog, target_s: f64) -> LatencyDeviation {
    let series: Vec<(f64, f64)> = log
        .events
        .iter()
        .filter_map(|e| match e {
            Event::LatencySample {
                t_wall_s,
                latency_s,
                ..
            } => Some((*t_wall_s, latency_s - target_s)),
            _ => None,
        })
        .collect();
    let devs: Vec<f64> = series.iter().map(|(_, d)| *d).collect();
    let abs: Vec<f64> = devs.iter().map(|d| d.abs()).collect();
    LatencyDeviation {
        stats: BoxStats::from_values(&devs),
        median_abs_s: median(&abs).unwrap_or(0.0),
        series,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub mean_bitrate_kbps: f64,
    pub stall_count: usize,
    pub total_stall_s: f64,
    pub stalls: Vec<StallRecord>,
    pub latency: LatencyDeviation,
    pub unique_segments: usize,
    pub total_segment_requests: usize,
    pub rerequest_pct: f64,
    pub rung_counts: Vec<usize>,
    pub rung_bitrates_kbps: Vec<f64>,
    pub total_playback_time_s: f64,
    pub segment_duration_s: f64,
    pub mos: f64,
}

impl RunMetrics {
    pub fn from_log(log: &SessionLog) -> Result<Self> {
        let (config, ladder, timeline, _) = log
            .start()
            .ok_or_else(|| Error::LogCorruption("missing session start".into()))?;
        let stalls = stall_summary(log)?;
        let acct = segment_accounting(log);
        let qoe = QoeInput::from_log(log)?;
        Ok(Self {
            mean_bitrate_kbps: mean_bitrate(log)?,
            stall_count: stalls.count,
            total_stall_s: stalls.total_s,
            stalls: stalls.stalls,
            latency: latency_deviation(log, config.target_latency_s),
            unique_segments: acct.unique,
            total_segment_requests: acct.total,
            rerequest_pct: acct.rerequest_pct,
            rung_counts: rung_counts(log, ladder.video.len()),
            rung_bitrates_kbps: ladder.video_bitrates_kbps(),
            total_playback_time_s: playback_time(log)?,
            segment_duration_s: timeline.segment_duration_s,
            mos: internal_mos(&qoe, ladder)?.value(),
        })
    }
}

/// Mean, median and nearest-rank 5th/95th percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Aggregate {
        n: v.len(),
        mean: v.iter().fold(0.0, |a, b| a + b) / v.len() as f64,
        median: median_sorted(&v),
        p5: nearest_rank_sorted(&v, 0.05),
        p95: nearest_rank_sorted(&v, 0.95),
    })
}

/// Smallest value with at least a fraction `p` of the data at or below it.
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(nearest_rank_sorted(&v, p))
}

fn nearest_rank_sorted(v: &[f64], p: f64) -> f64 {
    let rank = (p * v.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(median_sorted(&v))
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
