//! HTTP origin for the manifest and synthetic segments.
//!
//! Routes:
//! - `GET /manifest.json`
//! - `GET /video/{rep_id}/{segment_index}`
//! - `GET /audio/{segment_index}`
//!
//! Out-of-range ids answer 404, non-numeric ones 400. Every response can be
//! appended to a line-delimited JSON request log `{ts, path, status, bytes}`.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use tokio::sync::oneshot;

use crate::media::{segment_payload, Manifest, Track};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    pub manifest: Manifest,
    pub request_log_path: Option<PathBuf>,
    /// Salt for seeded size jitter; must match the player's run seed.
    pub size_salt: u64,
}

impl ServerConfig {
    pub fn new(bind: SocketAddr, manifest: Manifest) -> Self {
        Self {
            bind,
            manifest,
            request_log_path: None,
            size_salt: 0,
        }
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    ts: String,
    path: &'a str,
    status: u16,
    bytes: u64,
}

struct Origin {
    manifest: Manifest,
    manifest_json: String,
    salt: u64,
    log: Option<Mutex<File>>,
}

impl Origin {
    fn record(&self, path: &str, status: StatusCode, bytes: u64) {
        let Some(log) = &self.log else { return };
        let line = LogLine {
            ts: chrono::Utc::now().to_rfc3339(),
            path,
            status: status.as_u16(),
            bytes,
        };
        let mut text = serde_json::to_string(&line).expect("log line serializes");
        text.push('\n');
        if let Err(err) = log.lock().unwrap().write_all(text.as_bytes()) {
            tracing::warn!(%err, "request log write failed");
        }
    }

    fn status(&self, uri: &Uri, status: StatusCode, message: &str) -> Response {
        self.record(uri.path(), status, 0);
        (status, message.to_string()).into_response()
    }

    fn body(&self, uri: &Uri, track: Track, rep_id: usize, index: usize, len: u64) -> Response {
        let body = segment_payload(&self.manifest.profile.name, track, rep_id, index, len as usize);
        self.record(uri.path(), StatusCode::OK, len);
        (
            [(header::CONTENT_TYPE, "application/octet-stream")],
            body,
        )
            .into_response()
    }
}

type Shared = Arc<Origin>;

async fn get_manifest(State(origin): State<Shared>, uri: Uri) -> Response {
    origin.record(uri.path(), StatusCode::OK, origin.manifest_json.len() as u64);
    (
        [(header::CONTENT_TYPE, "application/json")],
        origin.manifest_json.clone(),
    )
        .into_response()
}

async fn video(
    State(origin): State<Shared>,
    Path((rep, index)): Path<(String, String)>,
    uri: Uri,
) -> Response {
    let (Ok(rep), Ok(index)) = (rep.parse::<usize>(), index.parse::<usize>()) else {
        return origin.status(&uri, StatusCode::BAD_REQUEST, "malformed segment path");
    };
    match origin.manifest.video_segment_bytes_salted(rep, index, origin.salt) {
        Some(len) => origin.body(&uri, Track::Video, rep, index, len),
        None => origin.status(&uri, StatusCode::NOT_FOUND, "no such segment"),
    }
}

async fn audio(State(origin): State<Shared>, Path(index): Path<String>, uri: Uri) -> Response {
    let Ok(index) = index.parse::<usize>() else {
        return origin.status(&uri, StatusCode::BAD_REQUEST, "malformed segment path");
    };
    match origin.manifest.audio_segment_bytes_salted(index, origin.salt) {
        Some(len) => origin.body(&uri, Track::Audio, 0, index, len),
        None => origin.status(&uri, StatusCode::NOT_FOUND, "no such segment"),
    }
}

async fn fallback(State(origin): State<Shared>, uri: Uri) -> Response {
    origin.status(&uri, StatusCode::NOT_FOUND, "not found")
}

pub fn router(manifest: Manifest, request_log: Option<File>, size_salt: u64) -> Router {
    let origin = Arc::new(Origin {
        manifest_json: manifest.to_json(),
        salt: size_salt,
        manifest,
        log: request_log.map(Mutex::new),
    });
    Router::new()
        .route("/manifest.json", get(get_manifest))
        .route("/video/{rep}/{index}", get(video))
        .route("/audio/{index}", get(audio))
        .fallback(fallback)
        .with_state(origin)
}

pub struct ServerHandle {
    local_addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    /// Stops accepting, lets in-flight requests finish, and waits.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }
}

pub async fn serve(config: ServerConfig) -> std::io::Result<ServerHandle> {
    config
        .manifest
        .profile
        .validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()))?;
    let log = match &config.request_log_path {
        Some(path) => Some(OpenOptions::new().create(true).append(true).open(path)?),
        None => None,
    };
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    let local_addr = listener.local_addr()?;
    let app = router(config.manifest, log, config.size_salt);
    let (stop, stopped) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    Ok(ServerHandle {
        local_addr,
        stop: Some(stop),
        task,
    })
}
