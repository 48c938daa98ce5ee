//! Session event stream and its line-delimited JSON form.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::abr::{DecisionTrigger, StateUpdate};
use crate::error::{Error, Result};
use crate::media::{Ladder, StreamTimeline};
use crate::netmodel::{LinkParams, NetworkProfile};

use super::config::PlayerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Init,
    Media,
    Replacement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    SessionStart {
        t_wall_s: f64,
        seed: u64,
        config: Box<PlayerConfig>,
        ladder: Box<Ladder>,
        timeline: StreamTimeline,
        link: LinkParams,
        profile: Box<NetworkProfile>,
    },
    RequestIssued {
        t_wall_s: f64,
        request_id: u64,
        kind: RequestKind,
        seg_index: usize,
        rep: usize,
        /// Video (or init) bytes.
        bytes: u64,
        /// Audio bytes carried in the same response.
        audio_bytes: u64,
    },
    ChunkReceived {
        t_wall_s: f64,
        request_id: u64,
        chunk_index: usize,
        first_byte_s: f64,
    },
    RequestCompleted {
        t_wall_s: f64,
        request_id: u64,
        kind: RequestKind,
        seg_index: usize,
        rep: usize,
        discarded: bool,
    },
    ThroughputSample {
        t_wall_s: f64,
        request_id: u64,
        seg_index: usize,
        rep: usize,
        is_init: bool,
        bits: f64,
        active_s: f64,
        kbps: f64,
    },
    AbrDecision {
        t_wall_s: f64,
        rep: usize,
        trigger: DecisionTrigger,
        buffer_s: f64,
        update: Option<StateUpdate>,
    },
    Switch {
        t_wall_s: f64,
        seg_index: usize,
        from: usize,
        to: usize,
    },
    FirstFrame {
        t_wall_s: f64,
        media_s: f64,
    },
    StallStart {
        t_wall_s: f64,
        media_s: f64,
    },
    StallEnd {
        t_wall_s: f64,
        media_s: f64,
        duration_s: f64,
        truncated: bool,
    },
    RateChange {
        t_wall_s: f64,
        rate: f64,
    },
    Seek {
        t_wall_s: f64,
        from_media_s: f64,
        to_media_s: f64,
    },
    FastSwitch {
        t_wall_s: f64,
        seg_index: usize,
        from: usize,
        to: usize,
    },
    ReplacementApplied {
        t_wall_s: f64,
        request_id: u64,
        seg_index: usize,
        rep: usize,
    },
    ReplacementDiscarded {
        t_wall_s: f64,
        request_id: u64,
        seg_index: usize,
        rep: usize,
    },
    /// A contiguous stretch of one segment that was rendered.
    Playout {
        t_wall_s: f64,
        seg_index: usize,
        rep: usize,
        media_start_s: f64,
        media_end_s: f64,
    },
    LatencySample {
        t_wall_s: f64,
        latency_s: f64,
        buffer_s: f64,
        rate: f64,
        stalled: bool,
    },
    SessionEnd {
        t_wall_s: f64,
        first_frame_s: Option<f64>,
        budget_s: f64,
    },
}

impl Event {
    pub fn t_wall_s(&self) -> f64 {
        use Event::*;
        match self {
            SessionStart { t_wall_s, .. }
            | RequestIssued { t_wall_s, .. }
            | ChunkReceived { t_wall_s, .. }
            | RequestCompleted { t_wall_s, .. }
            | ThroughputSample { t_wall_s, .. }
            | AbrDecision { t_wall_s, .. }
            | Switch { t_wall_s, .. }
            | FirstFrame { t_wall_s, .. }
            | StallStart { t_wall_s, .. }
            | StallEnd { t_wall_s, .. }
            | RateChange { t_wall_s, .. }
            | Seek { t_wall_s, .. }
            | FastSwitch { t_wall_s, .. }
            | ReplacementApplied { t_wall_s, .. }
            | ReplacementDiscarded { t_wall_s, .. }
            | Playout { t_wall_s, .. }
            | LatencySample { t_wall_s, .. }
            | SessionEnd { t_wall_s, .. } => *t_wall_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionLog {
    pub events: Vec<Event>,
}

impl SessionLog {
    pub fn new(events: Vec<Event>) -> Self {
        Self { events }
    }

    pub fn start(&self) -> Option<(&PlayerConfig, &Ladder, &StreamTimeline, u64)> {
        self.events.iter().find_map(|e| match e {
            Event::SessionStart {
                config,
                ladder,
                timeline,
                seed,
                ..
            } => Some((config.as_ref(), ladder.as_ref(), timeline, *seed)),
            _ => None,
        })
    }

    /// `(first_frame_s, end_s, budget_s)` from the closing marker.
    pub fn end(&self) -> Option<(Option<f64>, f64, f64)> {
        self.events.iter().rev().find_map(|e| match e {
            Event::SessionEnd {
                t_wall_s,
                first_frame_s,
                budget_s,
            } => Some((*first_frame_s, *t_wall_s, *budget_s)),
            _ => None,
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n").map_err(|e| Error::io("<log>", e))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn read_jsonl<R: Read>(input: R) -> Result<Self> {
        let mut events = Vec::new();
        for (i, line) in BufReader::new(input).lines().enumerate() {
            let line = line.map_err(|e| Error::io("<log>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Self { events })
    }
}
