//! Scheduled link conditions.
//!
//! A [`Trajectory`] is a piecewise-constant bandwidth/delay/loss schedule.
//! In virtual time it drives [`Trajectory::transfer_finish_time`]; in wall
//! clock time it drives the token-bucket [`proxy`].

pub mod proxy;
pub mod token_bucket;
mod trajectory;

pub use proxy::{start_shaping_proxy, start_shaping_proxy_seeded, ProxyHandle, ProxyStats, StatsReader};
pub use token_bucket::TokenBucket;
pub use trajectory::{
    load_trajectory, DrainSlice, LinkParams, LinkStage, RepeatMode, Trajectory, TrajectoryError,
    TransferPlan, PAPER_FIG4_JSON, PAPER_FIG4_NAME, TRAJECTORY_VERSION,
};
