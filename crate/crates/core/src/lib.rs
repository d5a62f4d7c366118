//! Testbed for HTTP adaptive-streaming rate adaptation.
//!
//! The crate wires together the pieces needed to evaluate an ABR policy
//! against a scheduled network:
//!
//! - [`media`]: bitrate ladders, segment geometry and the JSON manifest.
//! - [`link`]: bandwidth/delay/loss trajectories, a virtual-time transfer
//!   integrator and a wall-clock token-bucket shaping proxy.
//! - [`server`]: an HTTP origin serving the manifest and synthetic segments.
//! - [`player`]: the playback engine, reference ABR policies and the event log.
//! - [`metrics`]: stall, switch, startup, instability, inefficiency and QoE
//!   metrics computed from an event log.
//! - [`orchestrator`]: experiment configs, batch execution, the file-based
//!   results store, exports and the HTTP control API.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod link;
pub mod media;
pub mod metrics;
pub mod orchestrator;
pub mod player;
pub mod server;

pub use link::{LinkParams, LinkStage, RepeatMode, Trajectory};
pub use media::{ContentProfile, Manifest, Representation};
pub use metrics::{compute_report, AggregateReport, MetricsReport};
pub use player::{run_playback, AbrRegistry, EventLog, PlayerConfig};
