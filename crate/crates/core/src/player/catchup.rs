//! Playback-rate controllers that steer live latency toward the target.

use super::config::{CatchupMode, PlayerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatchupAction {
    Rate(f64),
    /// Jump the playhead so latency equals the target.
    Seek,
}

/// Proportional law with a deadband; seeks when latency is more than
/// `max_drift_s` above target.
pub fn default_catchup_rate(live_latency_s: f64, config: &PlayerConfig) -> CatchupAction {
    let dev = live_latency_s - config.target_latency_s;
    if dev > config.max_drift_s {
        return CatchupAction::Seek;
    }
    CatchupAction::Rate(proportional(dev, config))
}

/// Never speeds up into a nearly empty buffer; below the floor the rate drops
/// linearly toward the minimum. Otherwise identical to the default law.
pub fn lolp_catchup_rate(
    live_latency_s: f64,
    buffer_s: f64,
    config: &PlayerConfig,
) -> CatchupAction {
    let dev = live_latency_s - config.target_latency_s;
    if dev > config.max_drift_s {
        return CatchupAction::Seek;
    }
    let floor = config.lolp_buffer_floor_s;
    if buffer_s < floor {
        let delta = config.max_playback_rate_delta;
        let r = 1.0 - delta * (1.0 - buffer_s / floor);
        return CatchupAction::Rate(r.clamp(1.0 - delta, 1.0));
    }
    CatchupAction::Rate(proportional(dev, config))
}

pub fn catchup(live_latency_s: f64, buffer_s: f64, config: &PlayerConfig) -> CatchupAction {
    match config.effective_catchup() {
        CatchupMode::Default => default_catchup_rate(live_latency_s, config),
        CatchupMode::Lolp => lolp_catchup_rate(live_latency_s, buffer_s, config),
    }
}

/// Rate for a controller step where seeking is not allowed.
pub fn rate_without_seek(live_latency_s: f64, buffer_s: f64, config: &PlayerConfig) -> f64 {
    match catchup(live_latency_s, buffer_s, config) {
        CatchupAction::Rate(r) => r,
        CatchupAction::Seek => 1.0 + config.max_playback_rate_delta,
    }
}

fn proportional(dev: f64, config: &PlayerConfig) -> f64 {
    if dev.abs() <= config.catchup_deadband_s {
        return 1.0;
    }
    let delta = config.max_playback_rate_delta;
    (1.0 + config.catchup_gain * dev).clamp(1.0 - delta, 1.0 + delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::Algorithm;
    use proptest::prelude::*;

    fn cfg(target: f64) -> PlayerConfig {
        PlayerConfig::new(Algorithm::Dynamic, target)
    }

    #[test]
    fn default_law_examples() {
        let c = cfg(3.0);
        assert_eq!(default_catchup_rate(3.0, &c), CatchupAction::Rate(1.0));
        assert_eq!(default_catchup_rate(8.01, &c), CatchupAction::Seek);
        assert_eq!(default_catchup_rate(5.0, &c), CatchupAction::Rate(1.17));
        assert_eq!(default_catchup_rate(3.04, &c), CatchupAction::Rate(1.0));
        match default_catchup_rate(3.2, &c) {
            CatchupAction::Rate(r) => assert!((r - 1.1).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lolp_law_examples() {
        let c = cfg(3.0);
        match lolp_catchup_rate(5.0, 0.5, &c) {
            CatchupAction::Rate(r) => assert!(r <= 1.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(lolp_catchup_rate(3.0, 6.0, &c), CatchupAction::Rate(1.0));
        assert_eq!(lolp_catchup_rate(9.0, 6.0, &c), CatchupAction::Seek);
        assert_eq!(lolp_catchup_rate(3.0, 0.0, &c), CatchupAction::Rate(0.83));
    }

    #[test]
    fn catchup_budget_covers_five_seconds_in_thirty() {
        let c = cfg(3.0);
        let mut latency = 7.9;
        let mut t = 0.0;
        while t < 30.0 {
            if let CatchupAction::Rate(r) = default_catchup_rate(latency, &c) {
                latency -= (r - 1.0) * 0.5;
            }
            t += 0.5;
        }
        assert!(latency < 3.5, "{latency}");
    }

    proptest! {
        #[test]
        fn rates_within_bounds(lat in 0.0f64..30.0, buf in 0.0f64..20.0, target in 1.0f64..15.0) {
            for abr in [Algorithm::Dynamic, Algorithm::Lolp] {
                let c = PlayerConfig::new(abr, target);
                if let CatchupAction::Rate(r) = catchup(lat, buf, &c) {
                    prop_assert!((0.83 - 1e-12..=1.17 + 1e-12).contains(&r));
                }
                let r = rate_without_seek(lat, buf, &c);
                prop_assert!((0.83 - 1e-12..=1.17 + 1e-12).contains(&r));
            }
        }

        #[test]
        fn lolp_never_speeds_up_on_low_buffer(lat in 0.0f64..8.0, buf in 0.0f64..0.95) {
            let c = PlayerConfig::new(Algorithm::Lolp, 3.0);
            if let CatchupAction::Rate(r) = lolp_catchup_rate(lat, buf, &c) {
                prop_assert!(r <= 1.0);
            }
        }
    }
}
