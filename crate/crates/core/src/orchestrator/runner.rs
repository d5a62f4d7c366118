use std::net::SocketAddr;
use std::path::Path;
use std::sync::Mutex;

use chrono::Utc;

use super::config::{ExperimentConfig, Mode, ResolvedExperiment, Resolver};
use super::store::{ResultsStore, RunOutcome, RunRecord, RunStatus, StoreError};
use super::OrchestratorError;
use crate::link::start_shaping_proxy_seeded;
use crate::metrics::{aggregate_runs, compute_report, AggregateReport};
use crate::player::{run_playback_observed, AbrRegistry, EventLog, HttpLink, PlaybackEvent, VirtualLink};
use crate::server::{serve, ServerConfig};

/// Receives every playback event as `(run_index, event)`.
pub type RunObserver<'a> = &'a (dyn Fn(u32, &PlaybackEvent) + Sync);

#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Run virtual-mode repetitions on separate threads. Results are the
    /// same either way; proxy mode is always sequential.
    pub parallel: bool,
    pub observer: Option<RunObserver<'a>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub experiment_id: String,
    pub records: Vec<RunRecord>,
    /// Over the successful runs; `None` if every run failed.
    pub aggregate: Option<AggregateReport>,
}

impl ExperimentOutcome {
    pub fn failed_runs(&self) -> usize {
        self.records.iter().filter(|r| r.status == RunStatus::Failed).count()
    }
}

fn finish(resolved: &ResolvedExperiment, run_index: u32, seed: u64, log: EventLog, started: chrono::DateTime<Utc>) -> RunOutcome {
    let (report, error) = match &log.header.failure {
        Some(failure) => (None, Some(failure.clone())),
        None => match compute_report(&log, &resolved.trajectory) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        },
    };
    RunOutcome {
        run_index,
        seed,
        log,
        report,
        error,
        started_at: started,
        finished_at: Utc::now(),
    }
}

fn virtual_run(
    resolved: &ResolvedExperiment,
    registry: &AbrRegistry,
    run_index: u32,
    seed: u64,
    observer: Option<RunObserver<'_>>,
) -> Result<RunOutcome, OrchestratorError> {
    let started = Utc::now();
    let mut link = VirtualLink::new(resolved.trajectory.clone());
    let log = run_playback_observed(
        &resolved.manifest,
        &mut link,
        &resolved.player,
        seed,
        registry,
        &mut |e| {
            if let Some(obs) = observer {
                obs(run_index, e)
            }
        },
    )?;
    Ok(finish(resolved, run_index, seed, log, started))
}

fn proxy_run(
    runtime: &tokio::runtime::Runtime,
    resolved: &ResolvedExperiment,
    registry: &AbrRegistry,
    run_index: u32,
    seed: u64,
    observer: Option<RunObserver<'_>>,
) -> Result<RunOutcome, OrchestratorError> {
    let started = Utc::now();
    let loopback: SocketAddr = ([127, 0, 0, 1], 0).into();
    let mut server_config = ServerConfig::new(loopback, resolved.manifest.clone());
    server_config.size_salt = seed;
    let server = runtime.block_on(serve(server_config))?;
    let proxy = runtime.block_on(start_shaping_proxy_seeded(
        resolved.trajectory.clone(),
        loopback,
        server.local_addr(),
        seed,
    ))?;
    let mut link = HttpLink::new(
        format!("http://{}", proxy.local_addr()),
        resolved.trajectory.name(),
    );
    let log = run_playback_observed(
        &resolved.manifest,
        &mut link,
        &resolved.player,
        seed,
        registry,
        &mut |e| {
            if let Some(obs) = observer {
                obs(run_index, e)
            }
        },
    );
    runtime.block_on(async {
        proxy.shutdown().await;
        server.shutdown().await
    })?;
    Ok(finish(resolved, run_index, seed, log?, started))
}

/// Where finished runs go. The store itself is one; a shared store behind a
/// mutex is another, locked only for the duration of each write.
pub trait RunSink {
    fn write_run(
        &mut self,
        experiment_id: &str,
        config: &ExperimentConfig,
        outcome: &RunOutcome,
    ) -> Result<RunRecord, StoreError>;

    fn write_aggregate(&mut self, experiment_id: &str, aggregate: &AggregateReport) -> Result<(), StoreError>;
}

impl RunSink for ResultsStore {
    fn write_run(
        &mut self,
        experiment_id: &str,
        config: &ExperimentConfig,
        outcome: &RunOutcome,
    ) -> Result<RunRecord, StoreError> {
        ResultsStore::write_run(self, experiment_id, config, outcome)
    }

    fn write_aggregate(&mut self, experiment_id: &str, aggregate: &AggregateReport) -> Result<(), StoreError> {
        ResultsStore::write_aggregate(self, experiment_id, aggregate)
    }
}

impl RunSink for &Mutex<ResultsStore> {
    fn write_run(
        &mut self,
        experiment_id: &str,
        config: &ExperimentConfig,
        outcome: &RunOutcome,
    ) -> Result<RunRecord, StoreError> {
        self.lock().unwrap().write_run(experiment_id, config, outcome)
    }

    fn write_aggregate(&mut self, experiment_id: &str, aggregate: &AggregateReport) -> Result<(), StoreError> {
        self.lock().unwrap().write_aggregate(experiment_id, aggregate)
    }
}

/// Runs every repetition of `resolved`, persisting each run as it lands.
///
/// A run that fails (link error, undefined metrics) is recorded with status
/// `failed` and the batch continues. A store write failure aborts.
pub fn run_experiment(
    resolved: &ResolvedExperiment,
    store: &mut ResultsStore,
    registry: &AbrRegistry,
    options: RunOptions<'_>,
) -> Result<ExperimentOutcome, OrchestratorError> {
    let id = store.create_experiment(&resolved.config, &resolved.manifest, &resolved.trajectory)?;
    run_prepared(resolved, &id, store, registry, options)
}

/// Like [`run_experiment`] for an experiment directory that already exists.
pub fn run_prepared(
    resolved: &ResolvedExperiment,
    experiment_id: &str,
    sink: &mut dyn RunSink,
    registry: &AbrRegistry,
    options: RunOptions<'_>,
) -> Result<ExperimentOutcome, OrchestratorError> {
    let config = &resolved.config;
    let id = experiment_id;
    let seeds: Vec<(u32, u64)> = (0..config.runs).zip(config.seeds()).collect();
    let mut records = Vec::with_capacity(seeds.len());
    let mut reports = Vec::new();
    let mut persist = |outcome: RunOutcome| -> Result<(), OrchestratorError> {
        records.push(sink.write_run(id, config, &outcome)?);
        reports.extend(outcome.report);
        Ok(())
    };
    match config.mode {
        Mode::Virtual if options.parallel && seeds.len() > 1 => {
            let outcomes: Vec<Result<RunOutcome, OrchestratorError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = seeds
                    .iter()
                    .map(|&(i, seed)| {
                        scope.spawn(move || virtual_run(resolved, registry, i, seed, options.observer))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("playback thread panicked"))
                    .collect()
            });
            for outcome in outcomes {
                persist(outcome?)?;
            }
        }
        Mode::Virtual => {
            for &(i, seed) in &seeds {
                persist(virtual_run(resolved, registry, i, seed, options.observer)?)?;
            }
        }
        Mode::Proxy => {
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()?;
            for &(i, seed) in &seeds {
                persist(proxy_run(&runtime, resolved, registry, i, seed, options.observer)?)?;
            }
        }
    }
    let aggregate = if reports.is_empty() {
        None
    } else {
        let agg = aggregate_runs(&reports)?;
        sink.write_aggregate(id, &agg)?;
        Some(agg)
    };
    tracing::info!(experiment = %id, runs = records.len(), "experiment finished");
    Ok(ExperimentOutcome {
        experiment_id: id.to_string(),
        records,
        aggregate,
    })
}

/// Resolves and runs one config.
pub fn run_config(
    config: &ExperimentConfig,
    resolver: &Resolver,
    store: &mut ResultsStore,
    registry: &AbrRegistry,
) -> Result<ExperimentOutcome, OrchestratorError> {
    let resolved = resolver.resolve(config, registry)?;
    run_experiment(
        &resolved,
        store,
        registry,
        RunOptions {
            parallel: true,
            observer: None,
        },
    )
}

/// Result of one config file in a batch directory.
#[derive(Debug)]
pub struct BatchItem {
    pub file: String,
    pub result: Result<ExperimentOutcome, OrchestratorError>,
}

/// Runs every `*.json` config in `dir` in file-name order. A bad config is
/// reported in its item and the batch moves on.
pub fn run_batch(
    dir: &Path,
    resolver: &Resolver,
    store: &mut ResultsStore,
    registry: &AbrRegistry,
) -> Result<Vec<BatchItem>, OrchestratorError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut items = Vec::new();
    for path in files {
        let file = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let result = ExperimentConfig::load(&path)
            .map_err(OrchestratorError::from)
            .and_then(|c| run_config(&c, resolver, store, registry));
        match result {
            Err(e @ OrchestratorError::Store(_)) => return Err(e),
            result => items.push(BatchItem { file, result }),
        }
    }
    Ok(items)
}
