use std::io::Read;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::link::Trajectory;

#[derive(Debug, Clone)]
pub struct FetchRequest {
    pub path: String,
    /// Size the manifest promises for this resource.
    pub expected_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOutcome {
    /// Completion instant, on the same clock the request was issued on.
    pub finish: f64,
    pub bytes: u64,
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("GET {path}: {message}")]
    Http { path: String, message: String },
    #[error("GET {path}: expected {expected} bytes, received {received}")]
    ShortBody {
        path: String,
        expected: u64,
        received: u64,
    },
}

/// How the player moves bytes and tells time.
pub trait SegmentLink {
    /// Called once when playback is requested; the run clock starts at 0 here.
    fn begin(&mut self) {}

    /// Fetches a resource requested at `now` (seconds on the run clock).
    fn fetch(&mut self, request: &FetchRequest, now: f64) -> Result<FetchOutcome, LinkError>;

    /// Blocks until the run clock reaches `t`; a no-op in virtual time.
    fn wait_until(&mut self, _t: f64) {}

    /// Label recorded in the event log header.
    fn describe(&self) -> String;
}

/// Deterministic virtual-time link backed by a trajectory.
#[derive(Debug, Clone)]
pub struct VirtualLink {
    trajectory: Trajectory,
}

impl VirtualLink {
    pub fn new(trajectory: Trajectory) -> Self {
        Self { trajectory }
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }
}

impl SegmentLink for VirtualLink {
    fn fetch(&mut self, request: &FetchRequest, now: f64) -> Result<FetchOutcome, LinkError> {
        Ok(FetchOutcome {
            finish: self.trajectory.transfer_finish_time(now, request.expected_bytes),
            bytes: request.expected_bytes,
        })
    }

    fn describe(&self) -> String {
        self.trajectory.name().to_string()
    }
}

/// Wall-clock link issuing real HTTP GETs, typically through the shaping proxy.
pub struct HttpLink {
    client: reqwest::blocking::Client,
    base_url: String,
    label: String,
    epoch: Instant,
}

impl HttpLink {
    pub fn new(base_url: impl Into<String>, label: impl Into<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .expect("HTTP client builds");
        Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            label: label.into(),
            epoch: Instant::now(),
        }
    }

    fn elapsed(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }
}

impl SegmentLink for HttpLink {
    fn begin(&mut self) {
        self.epoch = Instant::now();
    }

    fn fetch(&mut self, request: &FetchRequest, now: f64) -> Result<FetchOutcome, LinkError> {
        self.wait_until(now);
        let url = format!("{}{}", self.base_url, request.path);
        let http_err = |message: String| LinkError::Http {
            path: request.path.clone(),
            message,
        };
        let response = self
            .client
            .get(&url)
            .send()
            .map_err(|e| http_err(e.to_string()))?;
        if !response.status().is_success() {
            return Err(http_err(format!("status {}", response.status())));
        }
        let mut received = 0u64;
        let mut body = response;
        let mut buf = [0u8; 64 * 1024];
        loop {
            match body.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => received += n as u64,
                Err(e) => return Err(http_err(e.to_string())),
            }
        }
        if received != request.expected_bytes {
            return Err(LinkError::ShortBody {
                path: request.path.clone(),
                expected: request.expected_bytes,
                received,
            });
        }
        Ok(FetchOutcome {
            finish: self.elapsed().max(now),
            bytes: received,
        })
    }

    fn wait_until(&mut self, t: f64) {
        let ahead = t - self.elapsed();
        if ahead > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(ahead));
        }
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
