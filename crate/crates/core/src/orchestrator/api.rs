//! HTTP control API. Submitted experiments queue FIFO and run one at a time
//! on a dedicated executor thread.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;

use super::config::{ConfigError, ExperimentConfig, FieldError, ResolvedExperiment, Resolver};
use super::runner::{run_prepared, RunOptions};
use super::store::{ResultsStore, RunRecord};
use crate::link::Trajectory;
use crate::media::{builtin_profile, Track, BUILTIN_PROFILES};
use crate::metrics::aggregate_runs;
use crate::player::{AbrRegistry, EventKind, PlaybackEvent};

const MAX_TELEMETRY_PAGE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// One live-view sample: what the player did and what the link offered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPoint {
    pub run_index: u32,
    pub t: f64,
    /// `buffer`, `segment`, `switch`, `startup`, `stall_start`, `stall_end` or `end`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub buffer_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bitrate_kbps: Option<u32>,
    pub stage_index: usize,
    pub bandwidth_kbps: f64,
}

impl TelemetryPoint {
    fn from_event(run_index: u32, e: &PlaybackEvent, trajectory: &Trajectory) -> Option<Self> {
        let (kind, buffer_s, bitrate_kbps) = match &e.kind {
            EventKind::BufferSample { level_s } => ("buffer", Some(*level_s), None),
            EventKind::SegmentCompleted {
                track: Track::Video,
                bitrate_kbps,
                ..
            } => ("segment", None, Some(*bitrate_kbps)),
            EventKind::QualitySwitch { .. } => ("switch", None, None),
            EventKind::StartupComplete => ("startup", None, None),
            EventKind::StallStart => ("stall_start", None, None),
            EventKind::StallEnd => ("stall_end", None, None),
            EventKind::End => ("end", None, None),
            _ => return None,
        };
        Some(Self {
            run_index,
            t: e.t,
            kind: kind.into(),
            buffer_s,
            bitrate_kbps,
            stage_index: trajectory.stage_index_at(e.t),
            bandwidth_kbps: trajectory.params_at(e.t).bandwidth_kbps,
        })
    }
}

struct Job {
    config: ExperimentConfig,
    resolved: Option<ResolvedExperiment>,
    status: JobStatus,
    error: Option<String>,
    current_run: Option<u32>,
    telemetry: Vec<TelemetryPoint>,
}

#[derive(Default)]
struct Jobs {
    order: Vec<String>,
    by_id: HashMap<String, Job>,
}

/// Shared state behind the API and its executor.
pub struct ApiState {
    store: Arc<Mutex<ResultsStore>>,
    registry: Arc<AbrRegistry>,
    resolver: Resolver,
    jobs: Mutex<Jobs>,
    queue: Mutex<Option<mpsc::Sender<String>>>,
}

impl ApiState {
    /// Experiments already in the store show up as finished jobs.
    fn new(
        store: Arc<Mutex<ResultsStore>>,
        registry: Arc<AbrRegistry>,
        resolver: Resolver,
        queue: mpsc::Sender<String>,
    ) -> Self {
        let mut jobs = Jobs::default();
        {
            let store = store.lock().unwrap();
            for id in store.experiment_ids().unwrap_or_default() {
                let Ok(config) = store.load_config(&id) else { continue };
                let runs = store.runs_of(&id).len() as u32;
                let status = if runs == config.runs { JobStatus::Done } else { JobStatus::Failed };
                jobs.order.push(id.clone());
                jobs.by_id.insert(
                    id,
                    Job {
                        config,
                        resolved: None,
                        status,
                        error: (status == JobStatus::Failed).then(|| "incomplete in store".to_string()),
                        current_run: None,
                        telemetry: Vec::new(),
                    },
                );
            }
        }
        Self {
            store,
            registry,
            resolver,
            jobs: Mutex::new(jobs),
            queue: Mutex::new(Some(queue)),
        }
    }

    fn execute(&self, id: &str) {
        let resolved = {
            let mut jobs = self.jobs.lock().unwrap();
            let Some(job) = jobs.by_id.get_mut(id) else { return };
            job.status = JobStatus::Running;
            job.resolved.take()
        };
        let Some(resolved) = resolved else { return };
        let trajectory = resolved.trajectory.clone();
        let observer = |run_index: u32, e: &PlaybackEvent| {
            let point = TelemetryPoint::from_event(run_index, e, &trajectory);
            let mut jobs = self.jobs.lock().unwrap();
            if let Some(job) = jobs.by_id.get_mut(id) {
                job.current_run = Some(run_index);
                job.telemetry.extend(point);
            }
        };
        let mut sink = self.store.as_ref();
        let result = run_prepared(
            &resolved,
            id,
            &mut sink,
            &self.registry,
            RunOptions {
                parallel: false,
                observer: Some(&observer),
            },
        );
        let mut jobs = self.jobs.lock().unwrap();
        if let Some(job) = jobs.by_id.get_mut(id) {
            match result {
                Ok(_) => job.status = JobStatus::Done,
                Err(e) => {
                    tracing::error!(experiment = id, error = %e, "experiment failed");
                    job.status = JobStatus::Failed;
                    job.error = Some(e.to_string());
                }
            }
        }
    }

    fn submit(&self, config: ExperimentConfig) -> Result<String, ConfigError> {
        let resolved = self.resolver.resolve(&config, &self.registry)?;
        let id = self
            .store
            .lock()
            .unwrap()
            .create_experiment(&config, &resolved.manifest, &resolved.trajectory)
            .map_err(|e| ConfigError::single("$", format!("store: {e}")))?;
        {
            let mut jobs = self.jobs.lock().unwrap();
            jobs.order.push(id.clone());
            jobs.by_id.insert(
                id.clone(),
                Job {
                    config,
                    resolved: Some(resolved),
                    status: JobStatus::Queued,
                    error: None,
                    current_run: None,
                    telemetry: Vec::new(),
                },
            );
        }
        if let Some(queue) = self.queue.lock().unwrap().as_ref() {
            let _ = queue.send(id.clone());
        }
        Ok(id)
    }
}

type Shared = Arc<ApiState>;

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn field_errors(errors: Vec<FieldError>) -> Response {
    (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "errors": errors }))).into_response()
}

async fn profiles() -> Response {
    let list: Vec<_> = BUILTIN_PROFILES
        .iter()
        .filter_map(|name| builtin_profile(name).ok())
        .collect();
    Json(list).into_response()
}

async fn trajectories(State(state): State<Shared>) -> Response {
    let list: Vec<_> = state
        .resolver
        .trajectory_names()
        .into_iter()
        .filter_map(|name| {
            let t = state.resolver.trajectory(&name).ok()?;
            Some(json!({
                "name": name,
                "repeat": t.repeat(),
                "total_duration_s": t.total_duration(),
                "stages": t.stages(),
            }))
        })
        .collect();
    Json(list).into_response()
}

async fn abr(State(state): State<Shared>) -> Response {
    Json(state.registry.names().collect::<Vec<_>>()).into_response()
}

async fn submit(State(state): State<Shared>, body: Bytes) -> Response {
    let config = match serde_json::from_slice::<ExperimentConfig>(&body) {
        Ok(c) => c,
        Err(e) => {
            return field_errors(vec![FieldError {
                field: "$".into(),
                message: e.to_string(),
            }])
        }
    };
    let submitted = tokio::task::spawn_blocking(move || state.submit(config)).await;
    match submitted {
        Ok(Ok(id)) => (StatusCode::ACCEPTED, Json(json!({ "id": id, "status": JobStatus::Queued }))).into_response(),
        Ok(Err(e)) => field_errors(e.errors),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

fn summary(id: &str, job: &Job, completed: usize) -> serde_json::Value {
    json!({
        "id": id,
        "name": job.config.name,
        "status": job.status,
        "abr": job.config.abr.name,
        "profile": job.config.profile,
        "trajectory": job.config.trajectory,
        "mode": job.config.mode,
        "runs": job.config.runs,
        "completed_runs": completed,
    })
}

async fn list(State(state): State<Shared>) -> Response {
    let jobs = state.jobs.lock().unwrap();
    let store = state.store.lock().unwrap();
    let list: Vec<_> = jobs
        .order
        .iter()
        .map(|id| summary(id, &jobs.by_id[id], store.runs_of(id).len()))
        .collect();
    Json(list).into_response()
}

async fn detail(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let jobs = state.jobs.lock().unwrap();
    let Some(job) = jobs.by_id.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown experiment `{id}`"));
    };
    let store = state.store.lock().unwrap();
    let records: Vec<RunRecord> = store.runs_of(&id).into_iter().cloned().collect();
    let mut doc = summary(&id, job, records.len());
    doc["config"] = json!(job.config);
    doc["current_run"] = json!(job.current_run);
    doc["error"] = json!(job.error);
    doc["records"] = json!(records);
    Json(doc).into_response()
}

#[derive(Deserialize)]
struct Cursor {
    #[serde(default)]
    cursor: usize,
    limit: Option<usize>,
}

async fn telemetry(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<Cursor>) -> Response {
    let jobs = state.jobs.lock().unwrap();
    let Some(job) = jobs.by_id.get(&id) else {
        return error(StatusCode::NOT_FOUND, format!("unknown experiment `{id}`"));
    };
    let limit = q.limit.unwrap_or(MAX_TELEMETRY_PAGE).clamp(1, MAX_TELEMETRY_PAGE);
    let from = q.cursor.min(job.telemetry.len());
    let to = (from + limit).min(job.telemetry.len());
    let points = &job.telemetry[from..to];
    Json(json!({
        "status": job.status,
        "current_run": job.current_run,
        "cursor": if points.is_empty() { q.cursor } else { to },
        "points": points,
    }))
    .into_response()
}

async fn report(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let status = match state.jobs.lock().unwrap().by_id.get(&id) {
        Some(job) => job.status,
        None => return error(StatusCode::NOT_FOUND, format!("unknown experiment `{id}`")),
    };
    if matches!(status, JobStatus::Queued | JobStatus::Running) {
        return (
            StatusCode::CONFLICT,
            Json(json!({ "error": "experiment has not finished", "status": status })),
        )
            .into_response();
    }
    let store = state.store.lock().unwrap();
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for record in store.runs_of(&id) {
        match store.load_report(record) {
            Ok(report) => {
                runs.push(json!({ "record": record, "report": report }));
                reports.extend(report);
            }
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
    let aggregate = aggregate_runs(&reports).ok();
    Json(json!({
        "experiment_id": id,
        "status": status,
        "aggregate": aggregate,
        "runs": runs,
    }))
    .into_response()
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "not found")
}

pub fn router(state: Arc<ApiState>) -> Router {
    Router::new()
        .route("/api/profiles", get(profiles))
        .route("/api/trajectories", get(trajectories))
        .route("/api/abr", get(abr))
        .route("/api/experiments", get(list).post(submit))
        .route("/api/experiments/{id}", get(detail))
        .route("/api/experiments/{id}/telemetry", get(telemetry))
        .route("/api/experiments/{id}/report", get(report))
        .fallback(not_found)
        .with_state(state)
}

/// Running API server plus its executor thread.
pub struct ApiHandle {
    local_addr: SocketAddr,
    state: Arc<ApiState>,
    stop: Option<oneshot::Sender<()>>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    executor: std::thread::JoinHandle<()>,
}

impl ApiHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    /// Stops the HTTP server, then waits for the executor to finish the
    /// experiment it is running. Queued experiments still run first.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        let served = self.server.await.map_err(std::io::Error::other)?;
        self.state.queue.lock().unwrap().take();
        let executor = self.executor;
        tokio::task::spawn_blocking(move || executor.join())
            .await
            .map_err(std::io::Error::other)?
            .map_err(|_| std::io::Error::other("executor panicked"))?;
        served
    }
}

/// Serves the control API on `bind`.
pub async fn start_control_api(
    bind: SocketAddr,
    store: ResultsStore,
    registry: AbrRegistry,
    resolver: Resolver,
) -> std::io::Result<ApiHandle> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let local_addr = listener.local_addr()?;
    let (queue, pending) = mpsc::channel::<String>();
    let state = Arc::new(ApiState::new(
        Arc::new(Mutex::new(store)),
        Arc::new(registry),
        resolver,
        queue,
    ));
    let worker = state.clone();
    let executor = std::thread::Builder::new()
        .name("abrbench-executor".into())
        .spawn(move || {
            while let Ok(id) = pending.recv() {
                worker.execute(&id);
            }
        })?;
    let app = router(state.clone());
    let (stop, stopped) = oneshot::channel::<()>();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(ApiHandle {
        local_addr,
        state,
        stop: Some(stop),
        server,
        executor,
    })
}
