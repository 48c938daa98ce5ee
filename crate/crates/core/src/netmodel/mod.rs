//! Bandwidth traces and transfer timing over a rate-limited link.
//!
//! A [`NetworkProfile`] is a piecewise-constant bandwidth trace. Transfer
//! times are obtained by integrating the trace exactly, segment by segment,
//! so no time-stepping error is introduced.

pub mod synthetic;

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::ProfileShape;

/// One step of a bandwidth trace. The value holds from `time_s` (inclusive)
/// until the next breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub time_s: f64,
    pub bandwidth_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    breakpoints: Vec<Breakpoint>,
    duration_s: f64,
}

impl NetworkProfile {
    /// Validates and builds a profile. Breakpoints must start at zero, be
    /// strictly increasing in time and carry positive bandwidth.
    pub fn new(breakpoints: Vec<Breakpoint>, duration_s: f64) -> Result<Self> {
        let first = breakpoints
            .first()
            .ok_or_else(|| Error::Domain("profile has no breakpoints".into()))?;
        if first.time_s != 0.0 {
            return Err(Error::Domain(format!(
                "first breakpoint must be at t=0, found {}",
                first.time_s
            )));
        }
        for (i, bp) in breakpoints.iter().enumerate() {
            if !(bp.bandwidth_bps > 0.0) || !bp.bandwidth_bps.is_finite() {
                return Err(Error::Domain(format!(
                    "bandwidth at t={} must be positive, found {}",
                    bp.time_s, bp.bandwidth_bps
                )));
            }
            if i > 0 && !(bp.time_s > breakpoints[i - 1].time_s) {
                return Err(Error::Domain(format!(
                    "breakpoint times must be strictly increasing ({} after {})",
                    bp.time_s,
                    breakpoints[i - 1].time_s
                )));
            }
        }
        let last_t = breakpoints.last().map(|b| b.time_s).unwrap_or(0.0);
        Ok(Self {
            breakpoints,
            duration_s: duration_s.max(last_t),
        })
    }

    pub fn constant(bandwidth_bps: f64) -> Self {
        Self::new(
            vec![Breakpoint {
                time_s: 0.0,
                bandwidth_bps,
            }],
            0.0,
        )
        .expect("constant profile with positive bandwidth")
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    fn index_at(&self, t: f64) -> usize {
        // Left-closed intervals: a breakpoint at exactly `t` is in effect.
        self.breakpoints
            .partition_point(|b| b.time_s <= t)
            .saturating_sub(1)
    }

    /// Piecewise-constant lookup. The last value extends indefinitely.
    pub fn bandwidth_at(&self, t: f64) -> f64 {
        debug_assert!(t >= 0.0, "bandwidth_at called with negative time {t}");
        self.breakpoints[self.index_at(t)].bandwidth_bps
    }

    /// Time-weighted mean bandwidth over `[0, duration_s]`.
    pub fn mean_bandwidth_bps(&self) -> f64 {
        if self.duration_s <= 0.0 {
            return self.breakpoints[0].bandwidth_bps;
        }
        let mut acc = 0.0;
        for (i, bp) in self.breakpoints.iter().enumerate() {
            let end = self
                .breakpoints
                .get(i + 1)
                .map(|n| n.time_s)
                .unwrap_or(self.duration_s)
                .min(self.duration_s);
            if end > bp.time_s {
                acc += (end - bp.time_s) * bp.bandwidth_bps;
            }
        }
        acc / self.duration_s
    }

    /// The same trace read from `offset_s` onwards, re-based to start at zero.
    pub fn shifted(&self, offset_s: f64) -> NetworkProfile {
        if offset_s <= 0.0 {
            return self.clone();
        }
        let mut bps = vec![Breakpoint {
            time_s: 0.0,
            bandwidth_bps: self.bandwidth_at(offset_s),
        }];
        bps.extend(
            self.breakpoints
                .iter()
                .filter(|b| b.time_s > offset_s)
                .map(|b| Breakpoint {
                    time_s: b.time_s - offset_s,
                    bandwidth_bps: b.bandwidth_bps,
                }),
        );
        NetworkProfile {
            breakpoints: bps,
            duration_s: (self.duration_s - offset_s).max(0.0),
        }
    }

    /// Earliest time at which `bits` have been delivered when the link starts
    /// sending at `ready_t`.
    pub fn finish_bits(&self, ready_t: f64, bits: f64) -> f64 {
        if bits <= 0.0 {
            return ready_t;
        }
        let mut t = ready_t;
        let mut remaining = bits;
        let mut idx = self.index_at(t);
        loop {
            let bw = self.breakpoints[idx].bandwidth_bps;
            match self.breakpoints.get(idx + 1) {
                Some(next) => {
                    let capacity = (next.time_s - t) * bw;
                    if remaining <= capacity {
                        return t + remaining / bw;
                    }
                    remaining -= capacity;
                    t = next.time_s;
                    idx += 1;
                }
                None => return t + remaining / bw,
            }
        }
    }

    /// Writes the profile as `time_s,bandwidth_kbps` CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time_s", "bandwidth_kbps"])?;
        for bp in &self.breakpoints {
            w.write_record([format_num(bp.time_s), format_num(bp.bandwidth_bps / 1000.0)])?;
        }
        if self.duration_s > self.breakpoints.last().map(|b| b.time_s).unwrap_or(0.0) {
            let last = self.breakpoints.last().expect("non-empty");
            w.write_record([
                format_num(self.duration_s),
                format_num(last.bandwidth_bps / 1000.0),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn format_num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Round-trip delay charged once per HTTP request before the first byte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub rtt_s: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self { rtt_s: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChunk {
    pub available_at_s: f64,
    pub size_bytes: u64,
}

/// Availability and size of each chunk of one response, in delivery order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSchedule(Vec<ScheduledChunk>);

impl ChunkSchedule {
    pub fn new(chunks: Vec<ScheduledChunk>) -> Result<Self> {
        if chunks.is_empty() {
            return Err(Error::Domain("chunk schedule is empty".into()));
        }
        for (i, c) in chunks.iter().enumerate() {
            if c.size_bytes == 0 {
                return Err(Error::Domain(format!("chunk {i} has zero size")));
            }
            if i > 0 && c.available_at_s < chunks[i - 1].available_at_s {
                return Err(Error::Domain(format!(
                    "chunk {i} becomes available before chunk {}",
                    i - 1
                )));
            }
        }
        Ok(Self(chunks))
    }

    pub fn chunks(&self) -> &[ScheduledChunk] {
        &self.0
    }

    pub fn total_bytes(&self) -> u64 {
        self.0.iter().map(|c| c.size_bytes).sum()
    }
}

/// Wall-clock span during which one chunk's bytes were on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkInterval {
    pub first_byte_s: f64,
    pub last_byte_s: f64,
}

impl ChunkInterval {
    pub fn active_s(&self) -> f64 {
        self.last_byte_s - self.first_byte_s
    }
}

/// Loads a `time_s,bandwidth_kbps` CSV trace from disk.
pub fn load_profile(path: impl AsRef<Path>) -> Result<NetworkProfile> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_profile_csv(file)
}

pub fn parse_profile_csv<R: Read>(input: R) -> Result<NetworkProfile> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "bandwidth_kbps" {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "expected header `time_s,bandwidth_kbps`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut bps = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("`{s}`: {e}"),
            })
        };
        let time_s = parse(&record[0])?;
        let kbps = parse(&record[1])?;
        bps.push(Breakpoint {
            time_s,
            bandwidth_bps: kbps * 1000.0,
        });
    }
    if bps.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "profile contains no rows".into(),
        });
    }
    let duration = bps.last().map(|b| b.time_s).unwrap_or(0.0);
    // A trailing row that repeats the previous value only marks the duration.
    if bps.len() >= 2 {
        let n = bps.len();
        if bps[n - 1].bandwidth_bps == bps[n - 2].bandwidth_bps
            && bps[n - 1].time_s > bps[n - 2].time_s
        {
            bps.pop();
        }
    }
    NetworkProfile::new(bps, duration)
}

/// Completion time of a single request of `payload_bytes` issued at `start_t`.
pub fn transfer_finish_time(
    profile: &NetworkProfile,
    start_t: f64,
    payload_bytes: u64,
    link: LinkParams,
) -> f64 {
    profile.finish_bits(start_t + link.rtt_s, payload_bytes as f64 * 8.0)
}

/// Chunked response whose chunks cannot be sent before they exist at the
/// origin. RTT is charged once; idle waits appear as gaps between intervals.
pub fn gated_transfer(
    profile: &NetworkProfile,
    start_t: f64,
    schedule: &ChunkSchedule,
    link: LinkParams,
) -> Vec<ChunkInterval> {
    let mut cursor = start_t + link.rtt_s;
    schedule
        .chunks()
        .iter()
        .map(|chunk| {
            let first = cursor.max(chunk.available_at_s);
            let last = profile.finish_bits(first, chunk.size_bytes as f64 * 8.0);
            cursor = last;
            ChunkInterval {
                first_byte_s: first,
                last_byte_s: last,
            }
        })
        .collect()
}
