//! Hybrid of the throughput rule (short buffer) and BOLA (long buffer).

use super::bola::{bola_decide, BolaParams};
use super::{highest_at_most, throughput_rule, AbrContext, AbrTuning};

#[derive(Debug, Clone)]
pub struct DynamicState {
    pub bola: BolaParams,
    pub using_bola: bool,
    safety: f64,
    enter_bola_s: f64,
    leave_bola_s: f64,
    buffer_guard: Option<f64>,
}

impl DynamicState {
    pub fn new(bola: BolaParams, tuning: &AbrTuning) -> Self {
        let half = tuning.switch_hysteresis_s / 2.0;
        Self {
            bola,
            using_bola: false,
            safety: tuning.throughput_safety,
            enter_bola_s: tuning.switch_buffer_s + half,
            leave_bola_s: tuning.switch_buffer_s - half,
            buffer_guard: tuning.insufficient_buffer_safety,
        }
    }

    pub fn decide(&mut self, ctx: &AbrContext<'_>) -> usize {
        let primary = self.primary(ctx);
        match self.buffer_guard {
            Some(safety) => primary.min(insufficient_buffer_cap(ctx, safety)),
            None => primary,
        }
    }

    fn primary(&mut self, ctx: &AbrContext<'_>) -> usize {
        if self.using_bola {
            if ctx.buffer_s < self.leave_bola_s {
                self.using_bola = false;
            }
        } else if ctx.buffer_s >= self.enter_bola_s {
            self.using_bola = true;
        }
        let tput = throughput_rule(ctx.swma_kbps, ctx.bitrates_kbps, self.safety);
        if !self.using_bola {
            return tput;
        }
        let b = bola_decide(ctx.buffer_s, &self.bola);
        // Up-switches beyond what throughput supports are held back.
        if b > ctx.previous_decision && b > tput {
            tput.max(ctx.previous_decision)
        } else {
            b
        }
    }
}

/// Highest rung the current buffer can cover; rung 0 once it has run dry.
pub fn insufficient_buffer_cap(ctx: &AbrContext<'_>, safety: f64) -> usize {
    if ctx.buffer_s <= 0.0 {
        return 0;
    }
    let budget = ctx.swma_kbps * ctx.buffer_s / ctx.segment_duration_s * safety;
    highest_at_most(ctx.bitrates_kbps, budget)
}
