//! Live player: request scheduling, buffer, playback clock and stalls.

pub mod catchup;
pub mod config;
mod engine;
pub mod log;

pub use catchup::{catchup, default_catchup_rate, lolp_catchup_rate, CatchupAction};
pub use config::{CatchupMode, PlayerConfig};
pub use engine::run_session;
pub use log::{Event, RequestKind, SessionLog};
