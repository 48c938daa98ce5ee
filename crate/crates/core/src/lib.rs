//! Discrete-event simulation of low-latency live DASH playback.
//!
//! A session couples a bandwidth trace ([`netmodel`]) with a chunked live
//! stream ([`media`]), a player engine ([`player`]) and one of the ABR rules
//! in [`abr`]. Every session produces a [`player::SessionLog`] from which
//! [`metrics`] and [`qoe`] derive the reported measurements. [`runner`]
//! expands experiment matrices and writes CSV results.

pub mod abr;
pub mod error;
pub mod media;
pub mod metrics;
pub mod netmodel;
pub mod player;
pub mod qoe;
pub mod runner;
pub mod throughput;

pub use error::{Error, Result};
