//! Playback harness: a download/buffer/stall state machine driven by a
//! pluggable ABR policy over a virtual or real link.

pub mod abr;
mod engine;
pub mod events;
pub mod link;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use abr::{AbrContext, AbrError, AbrParams, AbrPolicy, AbrRegistry, ThroughputSample};
pub use engine::{run_playback, run_playback_observed, SAMPLE_INTERVAL_S};
pub use events::{EventKind, EventLog, EventLogError, EventLogHeader, PlaybackEvent};
pub use link::{FetchOutcome, FetchRequest, HttpLink, LinkError, SegmentLink, VirtualLink};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbrSpec {
    pub name: String,
    #[serde(default)]
    pub params: AbrParams,
}

impl AbrSpec {
    pub fn named(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            params: AbrParams::new(),
        }
    }
}

impl Default for AbrSpec {
    fn default() -> Self {
        Self::named("throughput")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayerConfig {
    pub buffer_capacity_s: f64,
    pub startup_threshold_s: f64,
    pub rebuffer_threshold_s: f64,
    pub abr: AbrSpec,
    pub fetch_audio: bool,
}

impl Default for PlayerConfig {
    fn default() -> Self {
        Self {
            buffer_capacity_s: 30.0,
            startup_threshold_s: 4.0,
            rebuffer_threshold_s: 4.0,
            abr: AbrSpec::default(),
            fetch_audio: true,
        }
    }
}

impl PlayerConfig {
    pub fn with_abr(mut self, abr: AbrSpec) -> Self {
        self.abr = abr;
        self
    }

    pub fn validate(&self) -> Result<(), PlayerError> {
        let cap = self.buffer_capacity_s;
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(PlayerError::InvalidConfig(format!(
                "buffer_capacity_s must be > 0 (got {cap})"
            )));
        }
        for (field, v) in [
            ("startup_threshold_s", self.startup_threshold_s),
            ("rebuffer_threshold_s", self.rebuffer_threshold_s),
        ] {
            if !(v > 0.0 && v <= cap) {
                return Err(PlayerError::InvalidConfig(format!(
                    "{field} must be in (0, buffer_capacity_s] (got {v})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PlayerError {
    #[error("invalid player config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Abr(#[from] AbrError),
}
