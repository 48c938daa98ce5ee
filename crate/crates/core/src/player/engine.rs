//! Single-session event loop.
//!
//! Time advances from one event to the next; between events the playhead
//! moves linearly at the current rate. Simultaneous events are handled in a
//! fixed order: transfer progress, buffer exhaustion, the periodic
//! sample/control tick, the scheduler tick, and finally session end.

use std::collections::BTreeMap;

use crate::abr::{AbrContext, AbrState, DecisionTrigger};
use crate::error::Result;
use crate::media::{chunk_bytes, Ladder, SegmentRef, StreamTimeline, INIT_SEGMENT_BYTES};
use crate::netmodel::{
    gated_transfer, transfer_finish_time, ChunkInterval, ChunkSchedule, LinkParams, NetworkProfile,
    ScheduledChunk,
};
use crate::throughput::{sample_from_transfer, ThroughputHistory};

use super::catchup::{catchup, rate_without_seek, CatchupAction};
use super::config::PlayerConfig;
use super::log::{Event, RequestKind, SessionLog};

const EPS: f64 = 1e-9;

/// Runs one session. The engine is deterministic; `seed` is only echoed into
/// the log so results can be traced back to the run that produced them.
pub fn run_session(
    config: &PlayerConfig,
    profile: &NetworkProfile,
    timeline: &StreamTimeline,
    ladder: &Ladder,
    link: LinkParams,
    seed: u64,
) -> Result<SessionLog> {
    config.validate()?;
    ladder.validate()?;
    let mut s = Session::new(config, profile, timeline, ladder, link);
    s.log.push(Event::SessionStart {
        t_wall_s: s.now,
        seed,
        config: Box::new(config.clone()),
        ladder: Box::new(ladder.clone()),
        timeline: *timeline,
        link,
        profile: Box::new(profile.clone()),
    });
    s.run()?;
    Ok(SessionLog::new(s.log))
}

#[derive(Debug, Clone, Copy)]
struct BufferedSeg {
    rep: usize,
    chunks: usize,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Media { rep: usize },
    Replacement { seg: usize, rep: usize },
}

#[derive(Debug)]
struct InFlight {
    id: u64,
    kind: RequestKind,
    seg: usize,
    rep: usize,
    intervals: Vec<ChunkInterval>,
    video_sizes: Vec<u64>,
    next_chunk: usize,
    discard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Due {
    Transfer,
    Exhaustion,
    CatchupExit,
    Sample,
    Scheduler,
    End,
}

struct Session<'a> {
    cfg: &'a PlayerConfig,
    profile: &'a NetworkProfile,
    tl: &'a StreamTimeline,
    ladder: &'a Ladder,
    link: LinkParams,
    bitrates: Vec<f64>,
    abr: AbrState,
    history: ThroughputHistory,
    log: Vec<Event>,

    now: f64,
    join_t: f64,
    budget: f64,
    playhead: f64,
    rate: f64,
    stalled: bool,
    stall_start: f64,
    first_frame: Option<f64>,

    buf: BTreeMap<usize, BufferedSeg>,
    buf_end: f64,
    cur_seg: usize,
    cur_play_start: f64,

    next_seg: usize,
    in_flight: Option<InFlight>,
    next_request_id: u64,
    loaded_init: Option<usize>,
    audio_init_loaded: bool,
    pending: Option<Pending>,
    skip_abr: bool,
    sched_at: Option<f64>,
    /// When the current catch-up rate brings latency inside the deadband.
    catchup_exit_at: Option<f64>,

    next_sample: u64,
    n_samples: u64,

    last_decision: usize,
    last_media_rep: Option<usize>,
    last_seen_sample: Option<u64>,
}

impl<'a> Session<'a> {
    fn new(
        cfg: &'a PlayerConfig,
        profile: &'a NetworkProfile,
        tl: &'a StreamTimeline,
        ladder: &'a Ladder,
        link: LinkParams,
    ) -> Self {
        let join_t = tl.epoch_s + cfg.target_latency_s;
        let buffer_target = cfg.target_latency_s.min(cfg.stable_buffer_time_s);
        let budget = tl.budget_s();
        Self {
            cfg,
            profile,
            tl,
            ladder,
            link,
            bitrates: ladder.video_bitrates_kbps(),
            abr: AbrState::new(cfg.abr, ladder, tl, buffer_target, &cfg.tuning),
            history: ThroughputHistory::new(cfg.throughput_window),
            log: Vec::new(),
            now: join_t,
            join_t,
            budget,
            playhead: 0.0,
            rate: 1.0,
            stalled: false,
            stall_start: 0.0,
            first_frame: None,
            buf: BTreeMap::new(),
            buf_end: 0.0,
            cur_seg: 0,
            cur_play_start: 0.0,
            next_seg: 0,
            in_flight: None,
            next_request_id: 0,
            loaded_init: None,
            audio_init_loaded: false,
            pending: None,
            skip_abr: false,
            sched_at: Some(join_t),
            catchup_exit_at: None,
            next_sample: 0,
            n_samples: (budget / cfg.sample_interval_s + EPS).floor() as u64 + 1,
            last_decision: 0,
            last_media_rep: None,
            last_seen_sample: None,
        }
    }

    fn playing(&self) -> bool {
        self.first_frame.is_some() && !self.stalled
    }

    fn buffer_level(&self) -> f64 {
        (self.buf_end - self.playhead).max(0.0)
    }

    fn latency(&self) -> f64 {
        self.now - self.tl.epoch_s - self.playhead
    }

    fn end_time(&self) -> f64 {
        self.first_frame.unwrap_or(self.join_t) + self.budget
    }

    fn next_due(&self) -> (f64, Due) {
        let mut best = (self.end_time(), Due::End);
        let mut consider = |t: f64, d: Due| {
            if t < best.0 || (t == best.0 && d < best.1) {
                best = (t, d);
            }
        };
        if let Some(f) = &self.in_flight {
            consider(f.intervals[f.next_chunk].last_byte_s, Due::Transfer);
        }
        if self.playing() {
            consider(self.now + self.buffer_level() / self.rate, Due::Exhaustion);
        }
        if let Some(ff) = self.first_frame {
            if self.next_sample < self.n_samples {
                consider(
                    ff + self.next_sample as f64 * self.cfg.sample_interval_s,
                    Due::Sample,
                );
            }
        }
        if let Some(t) = self.sched_at {
            consider(t, Due::Scheduler);
        }
        if let Some(t) = self.catchup_exit_at {
            consider(t, Due::CatchupExit);
        }
        best
    }

    fn run(&mut self) -> Result<()> {
        loop {
            let (t, due) = self.next_due();
            self.advance_to(t);
            match due {
                Due::Transfer => self.on_transfer()?,
                Due::Exhaustion => self.on_exhaustion(),
                Due::CatchupExit => {
                    self.catchup_exit_at = None;
                    self.set_rate(1.0);
                }
                Due::Sample => self.on_sample(),
                Due::Scheduler => self.on_tick()?,
                Due::End => {
                    self.finish();
                    return Ok(());
                }
            }
        }
    }

    /// Moves the clock to `t`, playing media and closing segments crossed.
    fn advance_to(&mut self, t: f64) {
        let t = t.max(self.now);
        if self.playing() {
            let target = (self.playhead + self.rate * (t - self.now)).min(self.buf_end);
            loop {
                let boundary = self.tl.segment_start(self.cur_seg + 1);
                if boundary > target {
                    break;
                }
                let at = self.now + (boundary - self.playhead) / self.rate;
                self.emit_playout(at, boundary);
                self.buf.remove(&self.cur_seg);
                self.cur_seg += 1;
                self.cur_play_start = boundary;
            }
            self.playhead = target;
        }
        self.now = t;
    }

    fn emit_playout(&mut self, t: f64, end: f64) {
        if end <= self.cur_play_start {
            return;
        }
        if let Some(b) = self.buf.get(&self.cur_seg) {
            self.log.push(Event::Playout {
                t_wall_s: t,
                seg_index: self.cur_seg,
                rep: b.rep,
                media_start_s: self.cur_play_start,
                media_end_s: end,
            });
        }
    }

    fn set_rate(&mut self, rate: f64) {
        if rate != self.rate {
            self.rate = rate;
            self.log.push(Event::RateChange {
                t_wall_s: self.now,
                rate,
            });
        }
        self.arm_catchup_exit();
    }

    /// The controller watches latency continuously: a rate that closes the
    /// gap to the target is dropped back to 1 as soon as the deviation
    /// reaches the deadband.
    fn arm_catchup_exit(&mut self) {
        self.catchup_exit_at = None;
        if !self.playing() || self.rate == 1.0 {
            return;
        }
        let dev = self.latency() - self.cfg.target_latency_s;
        let closing = (self.rate - 1.0) * dev > 0.0;
        let gap = dev.abs() - self.cfg.catchup_deadband_s;
        if closing && gap > 0.0 {
            self.catchup_exit_at = Some(self.now + gap / (self.rate - 1.0).abs());
        }
    }

    fn on_exhaustion(&mut self) {
        self.playhead = self.buf_end;
        self.start_stall();
    }

    fn start_stall(&mut self) {
        self.stalled = true;
        self.catchup_exit_at = None;
        self.stall_start = self.now;
        self.log.push(Event::StallStart {
            t_wall_s: self.now,
            media_s: self.playhead,
        });
        self.log.push(Event::RateChange {
            t_wall_s: self.now,
            rate: 0.0,
        });
    }

    /// Starts or resumes playback once enough contiguous media is buffered.
    fn check_playable(&mut self) {
        if self.first_frame.is_some() && !self.stalled {
            return;
        }
        if self.buf_end - self.playhead < self.cfg.resume_buffer_s - EPS {
            return;
        }
        let rate = rate_without_seek(self.latency(), self.buffer_level(), self.cfg);
        if self.first_frame.is_none() {
            self.first_frame = Some(self.now);
            self.log.push(Event::FirstFrame {
                t_wall_s: self.now,
                media_s: self.playhead,
            });
        } else {
            self.stalled = false;
            self.log.push(Event::StallEnd {
                t_wall_s: self.now,
                media_s: self.playhead,
                duration_s: self.now - self.stall_start,
                truncated: false,
            });
        }
        self.rate = rate;
        self.log.push(Event::RateChange {
            t_wall_s: self.now,
            rate,
        });
        self.arm_catchup_exit();
    }

    fn on_sample(&mut self) {
        self.next_sample += 1;
        self.log.push(Event::LatencySample {
            t_wall_s: self.now,
            latency_s: self.latency(),
            buffer_s: self.buffer_level(),
            rate: if self.stalled { 0.0 } else { self.rate },
            stalled: self.stalled,
        });
        if self.stalled {
            return;
        }
        match catchup(self.latency(), self.buffer_level(), self.cfg) {
            CatchupAction::Rate(r) => self.set_rate(r),
            CatchupAction::Seek => self.seek(),
        }
    }

    /// Jumps forward so that latency equals the target.
    fn seek(&mut self) {
        let to = self.now - self.tl.epoch_s - self.cfg.target_latency_s;
        let from = self.playhead;
        self.emit_playout(self.now, from);
        self.log.push(Event::Seek {
            t_wall_s: self.now,
            from_media_s: from,
            to_media_s: to,
        });
        let landing = self.tl.segment_containing(to);
        self.buf.retain(|&s, _| s >= landing);
        self.playhead = to;
        self.cur_seg = landing;
        self.cur_play_start = to;
        if to < self.buf_end {
            return;
        }
        // Nothing buffered at the landing point.
        let in_flight_seg = self.in_flight.as_ref().and_then(|f| match f.kind {
            RequestKind::Media if !f.discard => Some(f.seg),
            _ => None,
        });
        match in_flight_seg {
            Some(seg) if seg == landing => {}
            other => {
                if other.is_some() {
                    if let Some(f) = self.in_flight.as_mut() {
                        f.discard = true;
                    }
                }
                self.buf.clear();
                self.buf_end = self.tl.segment_start(landing);
                self.next_seg = self.next_seg.max(landing);
            }
        }
        self.start_stall();
    }

    fn on_transfer(&mut self) -> Result<()> {
        let f = self
            .in_flight
            .as_mut()
            .expect("transfer event without request");
        let j = f.next_chunk;
        f.next_chunk += 1;
        let done = f.next_chunk == f.intervals.len();
        let (id, kind, seg, rep, discard) = (f.id, f.kind, f.seg, f.rep, f.discard);
        let first_byte_s = f.intervals[j].first_byte_s;
        if kind != RequestKind::Init {
            self.log.push(Event::ChunkReceived {
                t_wall_s: self.now,
                request_id: id,
                chunk_index: j,
                first_byte_s,
            });
        }
        if kind == RequestKind::Media && !discard {
            let e = self
                .buf
                .entry(seg)
                .or_insert(BufferedSeg { rep, chunks: 0 });
            e.chunks = j + 1;
            self.buf_end = self.tl.segment_start(seg) + (j + 1) as f64 * self.tl.chunk_duration_s;
            self.check_playable();
        }
        if done {
            self.complete()?;
        }
        Ok(())
    }

    fn complete(&mut self) -> Result<()> {
        let f = self.in_flight.take().expect("completion without request");
        self.log.push(Event::RequestCompleted {
            t_wall_s: self.now,
            request_id: f.id,
            kind: f.kind,
            seg_index: f.seg,
            rep: f.rep,
            discarded: f.discard,
        });
        if f.kind == RequestKind::Replacement {
            let applicable = f.seg > self.cur_seg
                && self
                    .buf
                    .get(&f.seg)
                    .is_some_and(|b| b.chunks == self.tl.chunks_per_segment);
            if applicable {
                self.buf.get_mut(&f.seg).expect("checked").rep = f.rep;
                self.log.push(Event::ReplacementApplied {
                    t_wall_s: self.now,
                    request_id: f.id,
                    seg_index: f.seg,
                    rep: f.rep,
                });
            } else {
                self.log.push(Event::ReplacementDiscarded {
                    t_wall_s: self.now,
                    request_id: f.id,
                    seg_index: f.seg,
                    rep: f.rep,
                });
            }
        }
        let source = SegmentRef {
            seg_index: f.seg,
            rep: f.rep,
            is_init: f.kind == RequestKind::Init,
        };
        let sample = sample_from_transfer(f.id, source, &f.intervals, &f.video_sizes)?;
        self.log.push(Event::ThroughputSample {
            t_wall_s: self.now,
            request_id: f.id,
            seg_index: f.seg,
            rep: f.rep,
            is_init: source.is_init,
            bits: sample.bits,
            active_s: sample.active_transfer_s,
            kbps: sample.kbps,
        });
        self.history.record(sample);
        if f.kind == RequestKind::Init {
            self.loaded_init = Some(f.rep);
            self.skip_abr = true;
        }
        self.sched_at = Some(self.now);
        Ok(())
    }

    fn wait(&mut self) {
        self.sched_at = Some(self.now + self.cfg.scheduler_timeout_s);
    }

    fn next_available(&self) -> bool {
        self.tl.chunk_available_at(self.next_seg, 0) <= self.now
    }

    fn on_tick(&mut self) -> Result<()> {
        self.sched_at = None;
        if self.in_flight.is_some() {
            return Ok(());
        }
        if std::mem::take(&mut self.skip_abr) {
            if let Some(p) = self.pending.take() {
                match p {
                    Pending::Media { rep } if self.next_available() => self.issue_media(rep),
                    Pending::Replacement { seg, rep } if self.replaceable(seg, rep) => {
                        self.issue_replacement(seg, rep)
                    }
                    _ => self.wait(),
                }
                return Ok(());
            }
        }
        let top = self.ladder.top();
        if self.buffer_level() >= self.cfg.stable_buffer_time_s
            && self.last_media_rep.is_some_and(|r| r < top)
        {
            self.wait();
            return Ok(());
        }
        let q = self.decide();
        if let Some(seg) = self.fast_switch_candidate(q) {
            let from = self.buf[&seg].rep;
            self.log.push(Event::FastSwitch {
                t_wall_s: self.now,
                seg_index: seg,
                from,
                to: q,
            });
            if self.loaded_init == Some(q) {
                self.issue_replacement(seg, q);
            } else {
                self.pending = Some(Pending::Replacement { seg, rep: q });
                self.issue_init(q);
            }
        } else if self.loaded_init != Some(q) {
            self.pending = Some(Pending::Media { rep: q });
            self.issue_init(q);
        } else if self.next_available() {
            self.issue_media(q);
        } else {
            self.wait();
        }
        Ok(())
    }

    fn decide(&mut self) -> usize {
        let last = self.history.last_sample().copied();
        let trigger = match last {
            Some(s) if self.last_seen_sample != Some(s.request_id) => DecisionTrigger::NewSample,
            None => DecisionTrigger::NewSample,
            _ => DecisionTrigger::SchedulerRepeat,
        };
        self.last_seen_sample = last.map(|s| s.request_id);
        let swma = self
            .history
            .estimate_swma()
            .unwrap_or(self.cfg.bootstrap_kbps);
        let ctx = AbrContext {
            buffer_s: self.buffer_level(),
            live_latency_s: self.latency(),
            target_latency_s: self.cfg.target_latency_s,
            last_sample: last.as_ref(),
            swma_kbps: swma,
            bitrates_kbps: &self.bitrates,
            segment_duration_s: self.tl.segment_duration_s,
            previous_decision: self.last_decision,
            trigger,
        };
        let out = self.abr.decide(&ctx);
        self.log.push(Event::AbrDecision {
            t_wall_s: self.now,
            rep: out.rep,
            trigger,
            buffer_s: ctx.buffer_s,
            update: out.update,
        });
        self.last_decision = out.rep;
        out.rep
    }

    fn replaceable(&self, seg: usize, rep: usize) -> bool {
        seg > self.cur_seg
            && self
                .buf
                .get(&seg)
                .is_some_and(|b| b.chunks == self.tl.chunks_per_segment && b.rep < rep)
    }

    fn fast_switch_candidate(&self, q: usize) -> Option<usize> {
        if !self.cfg.fast_switching || !self.playing() {
            return None;
        }
        let threshold = self.cfg.fast_switch_buffer_segments * self.tl.segment_duration_s;
        if self.buffer_level() <= threshold {
            return None;
        }
        self.buf.keys().copied().find(|&s| self.replaceable(s, q))
    }

    fn new_request_id(&mut self) -> u64 {
        let id = self.next_request_id;
        self.next_request_id += 1;
        id
    }

    fn issue_init(&mut self, rep: usize) {
        let id = self.new_request_id();
        let audio = if self.audio_init_loaded {
            0
        } else {
            INIT_SEGMENT_BYTES
        };
        self.audio_init_loaded = true;
        let done = transfer_finish_time(
            self.profile,
            self.now,
            INIT_SEGMENT_BYTES + audio,
            self.link,
        );
        self.log.push(Event::RequestIssued {
            t_wall_s: self.now,
            request_id: id,
            kind: RequestKind::Init,
            seg_index: self.next_seg,
            rep,
            bytes: INIT_SEGMENT_BYTES,
            audio_bytes: audio,
        });
        // The whole request, RTT included, is what gets measured.
        self.in_flight = Some(InFlight {
            id,
            kind: RequestKind::Init,
            seg: self.next_seg,
            rep,
            intervals: vec![ChunkInterval {
                first_byte_s: self.now,
                last_byte_s: done,
            }],
            video_sizes: vec![INIT_SEGMENT_BYTES],
            next_chunk: 0,
            discard: false,
        });
    }

    fn issue_media(&mut self, rep: usize) {
        let seg = self.next_seg;
        let video = chunk_bytes(&self.ladder.video[rep], self.tl);
        let audio = chunk_bytes(&self.ladder.audio, self.tl);
        let n = self.tl.chunks_per_segment;
        let chunks = (0..n)
            .map(|j| ScheduledChunk {
                available_at_s: self.tl.chunk_available_at(seg, j),
                size_bytes: video + audio,
            })
            .collect();
        self.start_transfer(
            RequestKind::Media,
            seg,
            rep,
            chunks,
            vec![video; n],
            audio * n as u64,
        );
        if let Some(prev) = self.last_media_rep {
            if prev != rep {
                self.log.push(Event::Switch {
                    t_wall_s: self.now,
                    seg_index: seg,
                    from: prev,
                    to: rep,
                });
            }
        }
        self.last_media_rep = Some(rep);
        self.next_seg += 1;
    }

    fn issue_replacement(&mut self, seg: usize, rep: usize) {
        let video = chunk_bytes(&self.ladder.video[rep], self.tl);
        let n = self.tl.chunks_per_segment;
        let chunks = (0..n)
            .map(|j| ScheduledChunk {
                available_at_s: self.tl.chunk_available_at(seg, j),
                size_bytes: video,
            })
            .collect();
        self.start_transfer(
            RequestKind::Replacement,
            seg,
            rep,
            chunks,
            vec![video; n],
            0,
        );
    }

    fn start_transfer(
        &mut self,
        kind: RequestKind,
        seg: usize,
        rep: usize,
        chunks: Vec<ScheduledChunk>,
        video_sizes: Vec<u64>,
        audio_bytes: u64,
    ) {
        let id = self.new_request_id();
        let schedule = ChunkSchedule::new(chunks).expect("segment chunks are well formed");
        let intervals = gated_transfer(self.profile, self.now, &schedule, self.link);
        self.log.push(Event::RequestIssued {
            t_wall_s: self.now,
            request_id: id,
            kind,
            seg_index: seg,
            rep,
            bytes: video_sizes.iter().sum(),
            audio_bytes,
        });
        self.in_flight = Some(InFlight {
            id,
            kind,
            seg,
            rep,
            intervals,
            video_sizes,
            next_chunk: 0,
            discard: false,
        });
    }

    fn finish(&mut self) {
        if self.playing() {
            self.emit_playout(self.now, self.playhead);
        } else if self.first_frame.is_some() && self.stalled {
            // The stretch played before the stall is still open.
            self.emit_playout(self.stall_start, self.playhead);
        }
        if self.first_frame.is_some() && self.stalled {
            self.log.push(Event::StallEnd {
                t_wall_s: self.now,
                media_s: self.playhead,
                duration_s: self.now - self.stall_start,
                truncated: true,
            });
        }
        self.log.push(Event::SessionEnd {
            t_wall_s: self.now,
            first_frame_s: self.first_frame,
            budget_s: self.budget,
        });
    }
}
