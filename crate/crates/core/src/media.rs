//! Encoding ladder, segment geometry and live availability of the stream.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Size of every initialisation segment, independent of representation.
pub const INIT_SEGMENT_BYTES: u64 = 900;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Video,
    Audio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub index: usize,
    pub bitrate_kbps: u32,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub kind: MediaKind,
}

impl Representation {
    pub fn resolution(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    pub fn bitrate_kbps_f64(&self) -> f64 {
        self.bitrate_kbps as f64
    }
}

/// Video representations sorted by bitrate plus the single audio track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    pub video: Vec<Representation>,
    pub audio: Representation,
}

impl Ladder {
    pub fn validate(&self) -> Result<()> {
        if self.video.is_empty() {
            return Err(Error::Config("ladder has no video representations".into()));
        }
        for (i, r) in self.video.iter().enumerate() {
            if r.index != i {
                return Err(Error::Config(format!(
                    "video representation at position {i} has index {}",
                    r.index
                )));
            }
            if r.bitrate_kbps == 0 || r.kind != MediaKind::Video {
                return Err(Error::Config(format!("invalid video representation {i}")));
            }
            if i > 0 && r.bitrate_kbps <= self.video[i - 1].bitrate_kbps {
                return Err(Error::Config(
                    "video ladder must be sorted ascending".into(),
                ));
            }
        }
        if self.audio.bitrate_kbps == 0 || self.audio.kind != MediaKind::Audio {
            return Err(Error::Config("invalid audio representation".into()));
        }
        Ok(())
    }

    pub fn top(&self) -> usize {
        self.video.len() - 1
    }

    pub fn video_bitrates_kbps(&self) -> Vec<f64> {
        self.video.iter().map(|r| r.bitrate_kbps_f64()).collect()
    }
}

impl Default for Ladder {
    fn default() -> Self {
        default_ladder()
    }
}

/// Nine H.264 video rungs and one 128 kbps audio track.
pub fn default_ladder() -> Ladder {
    const VIDEO: [(u32, u32, u32, u32); 9] = [
        (192, 108, 86, 25),
        (256, 144, 156, 25),
        (384, 216, 281, 25),
        (512, 288, 437, 25),
        (704, 396, 827, 50),
        (896, 504, 1374, 25),
        (704, 396, 1570, 50),
        (960, 540, 2811, 50),
        (1280, 720, 5468, 50),
    ];
    Ladder {
        video: VIDEO
            .iter()
            .enumerate()
            .map(
                |(index, &(width, height, bitrate_kbps, fps))| Representation {
                    index,
                    bitrate_kbps,
                    width,
                    height,
                    fps,
                    kind: MediaKind::Video,
                },
            )
            .collect(),
        audio: Representation {
            index: 0,
            bitrate_kbps: 128,
            width: 0,
            height: 0,
            fps: 0,
            kind: MediaKind::Audio,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamTimeline {
    pub segment_duration_s: f64,
    pub chunks_per_segment: usize,
    pub chunk_duration_s: f64,
    pub total_segments: usize,
    /// Wall-clock time at which media position zero starts being encoded.
    pub epoch_s: f64,
}

impl StreamTimeline {
    pub fn new(
        chunks_per_segment: usize,
        chunk_duration_s: f64,
        total_segments: usize,
    ) -> Result<Self> {
        if chunks_per_segment == 0 || !(chunk_duration_s > 0.0) || total_segments == 0 {
            return Err(Error::Config(format!(
                "invalid timeline: {chunks_per_segment} chunks of {chunk_duration_s}s, {total_segments} segments"
            )));
        }
        Ok(Self {
            segment_duration_s: chunks_per_segment as f64 * chunk_duration_s,
            chunks_per_segment,
            chunk_duration_s,
            total_segments,
            epoch_s: 0.0,
        })
    }

    /// 3.84 s segments of four 0.96 s chunks; 390 segments.
    pub fn live_default() -> Self {
        Self::new(4, 0.96, 390).expect("valid default timeline")
    }

    /// Session length implied by playing every segment once at 1x.
    pub fn budget_s(&self) -> f64 {
        self.total_segments as f64 * self.segment_duration_s
    }

    pub fn segment_start(&self, seg_index: usize) -> f64 {
        seg_index as f64 * self.segment_duration_s
    }

    /// A chunk is published once it has been fully encoded.
    pub fn chunk_available_at(&self, seg_index: usize, chunk_index: usize) -> f64 {
        debug_assert!(chunk_index < self.chunks_per_segment);
        self.epoch_s
            + seg_index as f64 * self.segment_duration_s
            + (chunk_index + 1) as f64 * self.chunk_duration_s
    }

    pub fn presentation_interval(&self, seg_index: usize) -> Result<(f64, f64)> {
        if seg_index >= self.total_segments {
            return Err(Error::Range {
                index: seg_index,
                total: self.total_segments,
            });
        }
        Ok((
            self.segment_start(seg_index),
            self.segment_start(seg_index + 1),
        ))
    }

    /// Segment whose media interval contains `media_s`.
    pub fn segment_containing(&self, media_s: f64) -> usize {
        let idx = (media_s / self.segment_duration_s).floor();
        let idx = if idx < 0.0 { 0 } else { idx as usize };
        // Guard against the division rounding across a boundary.
        if self.segment_start(idx + 1) <= media_s {
            idx + 1
        } else if idx > 0 && self.segment_start(idx) > media_s {
            idx - 1
        } else {
            idx
        }
    }
}

impl Default for StreamTimeline {
    fn default() -> Self {
        Self::live_default()
    }
}

/// Identity of a downloaded object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    /// Media segment index; for init segments the index of the segment the
    /// init was fetched ahead of.
    pub seg_index: usize,
    pub rep: usize,
    pub is_init: bool,
}

/// CBR chunk payload: `round(bitrate * chunk_duration / 8)` bytes.
pub fn chunk_bytes(rep: &Representation, timeline: &StreamTimeline) -> u64 {
    (rep.bitrate_kbps as f64 * 1000.0 * timeline.chunk_duration_s / 8.0).round() as u64
}

pub fn segment_bytes(rep: &Representation, timeline: &StreamTimeline) -> u64 {
    chunk_bytes(rep, timeline) * timeline.chunks_per_segment as u64
}
