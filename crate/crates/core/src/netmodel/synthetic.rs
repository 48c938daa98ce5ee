//! Seeded synthetic bandwidth traces in four difficulty classes.
//!
//! Generation procedure, identical for every shape:
//!
//! 1. Draw a holding time from an exponential distribution with the shape's
//!    mean, round it to 0.1 s and clamp it to `[1, 60]` s.
//! 2. Advance a stationary AR(1) process in log-bandwidth space,
//!    `x' = phi * x + sqrt(1 - phi^2) * sigma * N(0, 1)`, and set the level to
//!    `exp(mu + x')` with `mu = ln(mean) - sigma^2 / 2`.
//! 3. With probability `trough_prob`, replace the level with a trough drawn
//!    uniformly from `[0.5, 1.5] * trough_kbps`.
//! 4. Clamp to `[floor_kbps, ceil_kbps]`, round to whole kbps and emit a
//!    breakpoint; repeat until the requested duration is covered.
//!
//! All randomness comes from a ChaCha8 stream seeded with the caller's seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{Breakpoint, NetworkProfile};
use crate::error::Error;

/// Seed used for the built-in `A`..`D` profiles.
pub const BUILTIN_SEED: u64 = 2022;
/// Length of the built-in profiles. Covers one full session plus join delay
/// and the largest per-run start offset.
pub const BUILTIN_DURATION_S: f64 = 1800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileShape {
    /// Most challenging: mean below the middle of the ladder, deep troughs.
    A,
    B,
    C,
    /// Least challenging: mean above the 2811 kbps rung, shallow dips.
    D,
}

struct ShapeParams {
    mean_kbps: f64,
    sigma: f64,
    phi: f64,
    hold_mean_s: f64,
    trough_prob: f64,
    trough_kbps: f64,
    floor_kbps: f64,
    ceil_kbps: f64,
}

impl ProfileShape {
    pub const ALL: [ProfileShape; 4] = [Self::A, Self::B, Self::C, Self::D];

    fn params(self) -> ShapeParams {
        match self {
            ProfileShape::A => ShapeParams {
                mean_kbps: 700.0,
                sigma: 0.6,
                phi: 0.6,
                hold_mean_s: 10.0,
                trough_prob: 0.08,
                trough_kbps: 240.0,
                floor_kbps: 120.0,
                ceil_kbps: 4_000.0,
            },
            ProfileShape::B => ShapeParams {
                mean_kbps: 1_300.0,
                sigma: 0.6,
                phi: 0.6,
                hold_mean_s: 12.0,
                trough_prob: 0.08,
                trough_kbps: 250.0,
                floor_kbps: 80.0,
                ceil_kbps: 7_000.0,
            },
            ProfileShape::C => ShapeParams {
                mean_kbps: 2_400.0,
                sigma: 0.5,
                phi: 0.6,
                hold_mean_s: 15.0,
                trough_prob: 0.05,
                trough_kbps: 600.0,
                floor_kbps: 200.0,
                ceil_kbps: 10_000.0,
            },
            ProfileShape::D => ShapeParams {
                mean_kbps: 5_500.0,
                sigma: 0.3,
                phi: 0.6,
                hold_mean_s: 20.0,
                trough_prob: 0.02,
                trough_kbps: 2_500.0,
                floor_kbps: 1_500.0,
                ceil_kbps: 12_000.0,
            },
        }
    }

    /// The bundled profile for this shape.
    pub fn builtin(self) -> NetworkProfile {
        generate(self, BUILTIN_SEED, BUILTIN_DURATION_S)
    }
}

impl fmt::Display for ProfileShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ProfileShape::A => "A",
            ProfileShape::B => "B",
            ProfileShape::C => "C",
            ProfileShape::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for ProfileShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" => Ok(Self::A),
            "B" | "b" => Ok(Self::B),
            "C" | "c" => Ok(Self::C),
            "D" | "d" => Ok(Self::D),
            other => Err(Error::Config(format!("unknown profile shape `{other}`"))),
        }
    }
}

pub fn generate(shape: ProfileShape, seed: u64, duration_s: f64) -> NetworkProfile {
    let p = shape.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hold = Exp::new(1.0 / p.hold_mean_s).expect("positive rate");
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mu = p.mean_kbps.ln() - p.sigma * p.sigma / 2.0;
    let innovation = (1.0 - p.phi * p.phi).sqrt() * p.sigma;

    let mut x = p.sigma * noise.sample(&mut rng);
    let mut t_ds: u64 = 0;
    let end_ds = (duration_s * 10.0).ceil() as u64;
    let mut bps = Vec::new();
    while t_ds < end_ds {
        let kbps = if rng.random::<f64>() < p.trough_prob {
            p.trough_kbps * rng.random_range(0.5..1.5)
        } else {
            (mu + x).exp()
        };
        let kbps = kbps.clamp(p.floor_kbps, p.ceil_kbps).round();
        bps.push(Breakpoint {
            time_s: t_ds as f64 / 10.0,
            bandwidth_bps: kbps * 1000.0,
        });
        let h: f64 = hold.sample(&mut rng);
        let h_ds = ((h * 10.0).round() as u64).clamp(10, 600);
        t_ds += h_ds;
        x = p.phi * x + innovation * noise.sample(&mut rng);
    }
    NetworkProfile::new(bps, duration_s).expect("generated profile is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded() {
        let a = generate(ProfileShape::B, 7, 600.0);
        let b = generate(ProfileShape::B, 7, 600.0);
        let c = generate(ProfileShape::B, 8, 600.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn builtin_shapes_are_ordered_by_difficulty() {
        let means: Vec<f64> = ProfileShape::ALL
            .iter()
            .map(|s| s.builtin().mean_bandwidth_bps() / 1000.0)
            .collect();
        assert!(means[0] < 827.0, "A mean {}", means[0]);
        assert!(means[3] > 2811.0, "D mean {}", means[3]);
        assert!(means.windows(2).all(|w| w[0] < w[1]), "{means:?}");
    }

    #[test]
    fn builtin_covers_duration() {
        for s in ProfileShape::ALL {
            let p = s.builtin();
            assert!(p.duration_s() >= BUILTIN_DURATION_S);
            assert!(p.breakpoints().iter().all(|b| b.bandwidth_bps > 0.0));
        }
    }

    #[test]
    fn shape_parsing() {
        assert_eq!("c".parse::<ProfileShape>().unwrap(), ProfileShape::C);
        assert!("E".parse::<ProfileShape>().is_err());
    }
}
