//! Experiment orchestration: configs, batch execution, the results store,
//! exports, and the control API.

pub mod api;
pub mod config;
pub mod export;
pub mod runner;
pub mod store;

use thiserror::Error;

pub use api::{start_control_api, ApiHandle, ApiState};
pub use config::{ConfigError, ExperimentConfig, FieldError, Mode, PlayerSettings, ResolvedExperiment, Resolver};
pub use export::{export_results, list_runs, ExportFormat, Selector};
pub use runner::{run_batch, run_config, run_experiment, run_prepared, BatchItem, ExperimentOutcome, RunOptions, RunSink};
pub use store::{ResultsStore, RunOutcome, RunRecord, RunStatus, StoreError};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Player(#[from] crate::player::PlayerError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
