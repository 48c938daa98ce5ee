//! Throughput samples from chunk timing and a sliding-window estimator.
//!
//! Samples are derived per chunk: only the time bytes were actually flowing
//! counts, so waiting for a chunk to be published at the live edge does not
//! depress the estimate. Init segments are recorded as the most recent sample
//! but never enter the averaging window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::SegmentRef;
use crate::netmodel::ChunkInterval;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSample {
    /// Request that produced the sample.
    pub request_id: u64,
    pub source: SegmentRef,
    pub bits: f64,
    pub active_transfer_s: f64,
    pub kbps: f64,
}

impl ThroughputSample {
    pub fn is_init(&self) -> bool {
        self.source.is_init
    }
}

/// Builds a sample from per-chunk wire intervals. `chunk_sizes` are the bytes
/// attributed to the measured object for each interval.
pub fn sample_from_transfer(
    request_id: u64,
    seg: SegmentRef,
    chunk_intervals: &[ChunkInterval],
    chunk_sizes: &[u64],
) -> Result<ThroughputSample> {
    debug_assert_eq!(chunk_intervals.len(), chunk_sizes.len());
    let bits = chunk_sizes.iter().sum::<u64>() as f64 * 8.0;
    let active: f64 = chunk_intervals.iter().map(ChunkInterval::active_s).sum();
    if !(active > 0.0) {
        return Err(Error::DegenerateDuration);
    }
    Ok(ThroughputSample {
        request_id,
        source: seg,
        bits,
        active_transfer_s: active,
        kbps: bits / active / 1000.0,
    })
}

#[derive(Debug, Clone)]
pub struct ThroughputHistory {
    capacity: usize,
    window: VecDeque<ThroughputSample>,
    last_sample: Option<ThroughputSample>,
}

impl ThroughputHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(
            capacity > 0,
            "throughput window must hold at least one sample"
        );
        Self {
            capacity,
            window: VecDeque::with_capacity(capacity),
            last_sample: None,
        }
    }

    pub fn record(&mut self, sample: ThroughputSample) {
        self.last_sample = Some(sample);
        if sample.is_init() {
            return;
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(sample);
    }

    /// Most recent sample of any kind, init segments included.
    pub fn last_sample(&self) -> Option<&ThroughputSample> {
        self.last_sample.as_ref()
    }

    pub fn window(&self) -> impl Iterator<Item = &ThroughputSample> {
        self.window.iter()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Arithmetic mean of the windowed media samples, in kbps.
    pub fn estimate_swma(&self) -> Result<f64> {
        if self.window.is_empty() {
            return Err(Error::EmptyHistory);
        }
        Ok(self.window.iter().map(|s| s.kbps).sum::<f64>() / self.window.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn media(id: u64, kbps: f64) -> ThroughputSample {
        ThroughputSample {
            request_id: id,
            source: SegmentRef {
                seg_index: id as usize,
                rep: 0,
                is_init: false,
            },
            bits: kbps * 1000.0,
            active_transfer_s: 1.0,
            kbps,
        }
    }

    fn kbps_of(h: &ThroughputHistory) -> Vec<f64> {
        h.window().map(|s| s.kbps).collect()
    }

    #[test]
    fn init_sample_only_updates_last() {
        let mut h = ThroughputHistory::new(3);
        h.record(media(1, 1000.0));
        let iv = [ChunkInterval {
            first_byte_s: 0.0,
            last_byte_s: 0.09,
        }];
        let seg = SegmentRef {
            seg_index: 2,
            rep: 4,
            is_init: true,
        };
        let init = sample_from_transfer(2, seg, &iv, &[900]).unwrap();
        assert!((init.kbps - 80.0).abs() < 1e-9);
        h.record(init);
        assert_eq!(kbps_of(&h), [1000.0]);
        assert!(h.last_sample().unwrap().is_init());
        assert!((h.last_sample().unwrap().kbps - 80.0).abs() < 1e-9);
    }

    #[test]
    fn window_appends_and_evicts() {
        let mut h = ThroughputHistory::new(3);
        h.record(media(1, 1000.0));
        h.record(media(2, 3000.0));
        h.record(media(3, 2000.0));
        assert_eq!(kbps_of(&h), [1000.0, 3000.0, 2000.0]);
        h.record(media(4, 500.0));
        assert_eq!(kbps_of(&h), [3000.0, 2000.0, 500.0]);
    }

    #[test]
    fn swma_mean() {
        let mut h = ThroughputHistory::new(3);
        assert!(matches!(h.estimate_swma(), Err(Error::EmptyHistory)));
        h.record(media(1, 1374.0));
        assert_eq!(h.estimate_swma().unwrap(), 1374.0);
        h.record(media(2, 1000.0));
        h.record(media(3, 3000.0));
        h.record(media(4, 2000.0));
        assert!((h.estimate_swma().unwrap() - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn sample_excludes_idle_gaps() {
        let seg = SegmentRef {
            seg_index: 0,
            rep: 0,
            is_init: false,
        };
        let tight = [
            ChunkInterval {
                first_byte_s: 0.0,
                last_byte_s: 0.096,
            },
            ChunkInterval {
                first_byte_s: 0.096,
                last_byte_s: 0.192,
            },
        ];
        let gapped = [
            ChunkInterval {
                first_byte_s: 0.96,
                last_byte_s: 1.056,
            },
            ChunkInterval {
                first_byte_s: 1.916,
                last_byte_s: 2.012,
            },
        ];
        let a = sample_from_transfer(0, seg, &tight, &[120_000, 120_000]).unwrap();
        let b = sample_from_transfer(0, seg, &gapped, &[120_000, 120_000]).unwrap();
        assert!((a.kbps - 10_000.0).abs() < 1e-6, "{}", a.kbps);
        assert!((b.kbps - 10_000.0).abs() < 1e-6, "{}", b.kbps);
    }

    #[test]
    fn init_sample_formula() {
        let seg = SegmentRef {
            seg_index: 0,
            rep: 0,
            is_init: true,
        };
        let iv = [ChunkInterval {
            first_byte_s: 1.0,
            last_byte_s: 1.01,
        }];
        let s = sample_from_transfer(0, seg, &iv, &[900]).unwrap();
        assert!((s.kbps - 720.0).abs() < 1e-6);
        assert!(s.is_init());
    }

    #[test]
    fn zero_duration_is_rejected() {
        let seg = SegmentRef {
            seg_index: 0,
            rep: 0,
            is_init: false,
        };
        let iv = [ChunkInterval {
            first_byte_s: 1.0,
            last_byte_s: 1.0,
        }];
        assert!(matches!(
            sample_from_transfer(0, seg, &iv, &[10]),
            Err(Error::DegenerateDuration)
        ));
    }

    proptest! {
        #[test]
        fn window_never_holds_init(samples in prop::collection::vec((any::<bool>(), 1.0f64..10_000.0), 1..40), cap in 1usize..6) {
            let mut h = ThroughputHistory::new(cap);
            for (i, (init, kbps)) in samples.into_iter().enumerate() {
                let mut s = media(i as u64, kbps);
                s.source.is_init = init;
                h.record(s);
                prop_assert!(h.window().all(|s| !s.is_init()));
                prop_assert!(h.len() <= cap);
            }
        }

        #[test]
        fn swma_bounded_by_window(rates in prop::collection::vec(1.0f64..10_000.0, 1..10)) {
            let mut h = ThroughputHistory::new(3);
            for (i, r) in rates.iter().enumerate() {
                h.record(media(i as u64, *r));
            }
            let w = kbps_of(&h);
            let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let est = h.estimate_swma().unwrap();
            prop_assert!(est >= lo - 1e-9 && est <= hi + 1e-9);
        }

        #[test]
        fn idle_stretching_leaves_sample_unchanged(active in prop::collection::vec(0.001f64..1.0, 1..5), gaps in prop::collection::vec(0.0f64..3.0, 5)) {
            let seg = SegmentRef { seg_index: 0, rep: 0, is_init: false };
            let sizes: Vec<u64> = active.iter().map(|_| 50_000).collect();
            let build = |stretch: f64| {
                let mut t = 0.0;
                active.iter().zip(&gaps).map(|(a, g)| {
                    t += g * stretch;
                    let iv = ChunkInterval { first_byte_s: t, last_byte_s: t + a };
                    t += a;
                    iv
                }).collect::<Vec<_>>()
            };
            let a = sample_from_transfer(0, seg, &build(1.0), &sizes).unwrap();
            let b = sample_from_transfer(0, seg, &build(4.0), &sizes).unwrap();
            prop_assert!((a.kbps - b.kbps).abs() <= 1e-6 * a.kbps);
        }
    }
}
