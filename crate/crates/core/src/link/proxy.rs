//! Wall-clock shaping proxy.
//!
//! Relays TCP byte streams between clients and one upstream. All flows in
//! both directions draw from a single token bucket whose rate follows the
//! active trajectory stage, so concurrent connections fair-share the link.
//! Each forwarded chunk is held back by the stage's one-way delay. A chunk
//! hit by loss still spends its credit and is then re-sent after one extra
//! RTT, keeping the byte stream intact while charging the retransmission.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinSet;

use super::token_bucket::TokenBucket;
use super::Trajectory;

/// Window over which `measured_kbps` is averaged.
pub const RATE_WINDOW_S: f64 = 0.5;

const READ_BUF: usize = 16 * 1024;
const DELAY_QUEUE_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyStats {
    pub elapsed_s: f64,
    pub stage_index: usize,
    pub bandwidth_kbps: f64,
    pub forwarded_bytes: u64,
    pub measured_kbps: f64,
    pub connections: u64,
    pub upstream_failures: u64,
    pub lost_chunks: u64,
}

struct Shaper {
    trajectory: Trajectory,
    epoch: Instant,
    bucket: TokenBucket,
    stage: usize,
}

impl Shaper {
    fn now(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64()
    }

    fn sync_stage(&mut self, now: f64) {
        let stage = self.trajectory.stage_index_at(now);
        if stage != self.stage {
            self.stage = stage;
            let rate = bytes_per_s(&self.trajectory, now);
            self.bucket.set_rate(rate, now);
        }
    }
}

fn bytes_per_s(trajectory: &Trajectory, t: f64) -> f64 {
    trajectory.params_at(t).bandwidth_kbps * 1000.0 / 8.0
}

struct Shared {
    shaper: Mutex<Shaper>,
    forwarded: AtomicU64,
    connections: AtomicU64,
    upstream_failures: AtomicU64,
    lost_chunks: AtomicU64,
    recent: Mutex<VecDeque<(f64, usize)>>,
    seed: u64,
}

impl Shared {
    /// Waits for up to `max` bytes of link credit; returns the grant plus
    /// the stage's delay and loss at grant time.
    async fn acquire(&self, max: usize) -> (usize, f64, f64) {
        loop {
            let wait = {
                let mut shaper = self.shaper.lock().unwrap();
                let now = shaper.now();
                shaper.sync_stage(now);
                match shaper.bucket.try_take(max, now) {
                    Ok(n) => {
                        let p = shaper.trajectory.params_at(now);
                        return (n, p.delay_ms, p.loss_pct);
                    }
                    Err(wait) => wait,
                }
            };
            tokio::time::sleep(Duration::from_secs_f64(wait.max(0.0005))).await;
        }
    }

    fn record_forward(&self, n: usize) {
        self.forwarded.fetch_add(n as u64, Ordering::Relaxed);
        let now = self.shaper.lock().unwrap().now();
        let mut recent = self.recent.lock().unwrap();
        recent.push_back((now, n));
        while recent.front().is_some_and(|&(t, _)| t < now - RATE_WINDOW_S) {
            recent.pop_front();
        }
    }

    fn snapshot(&self) -> ProxyStats {
        let (now, stage, bandwidth_kbps) = {
            let mut shaper = self.shaper.lock().unwrap();
            let now = shaper.now();
            shaper.sync_stage(now);
            (now, shaper.stage, shaper.trajectory.params_at(now).bandwidth_kbps)
        };
        let measured_kbps = {
            let mut recent = self.recent.lock().unwrap();
            while recent.front().is_some_and(|&(t, _)| t < now - RATE_WINDOW_S) {
                recent.pop_front();
            }
            let bytes: usize = recent.iter().map(|&(_, n)| n).sum();
            let window = RATE_WINDOW_S.min(now).max(1e-3);
            bytes as f64 * 8.0 / window / 1000.0
        };
        ProxyStats {
            elapsed_s: now,
            stage_index: stage,
            bandwidth_kbps,
            forwarded_bytes: self.forwarded.load(Ordering::Relaxed),
            measured_kbps,
            connections: self.connections.load(Ordering::Relaxed),
            upstream_failures: self.upstream_failures.load(Ordering::Relaxed),
            lost_chunks: self.lost_chunks.load(Ordering::Relaxed),
        }
    }
}

/// Running proxy. Dropping the handle does not stop it; call
/// [`shutdown`](Self::shutdown).
pub struct ProxyHandle {
    local_addr: SocketAddr,
    shared: Arc<Shared>,
    stop: watch::Sender<bool>,
    task: tokio::task::JoinHandle<()>,
}

impl ProxyHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn stats(&self) -> ProxyStats {
        self.shared.snapshot()
    }

    /// A cheap, cloneable reader of live stats.
    pub fn stats_reader(&self) -> StatsReader {
        StatsReader(self.shared.clone())
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.task.await;
    }
}

#[derive(Clone)]
pub struct StatsReader(Arc<Shared>);

impl StatsReader {
    pub fn stats(&self) -> ProxyStats {
        self.0.snapshot()
    }
}

/// Binds `listen` and relays every accepted connection to `upstream`.
/// The stage clock starts when this returns.
pub async fn start_shaping_proxy(
    trajectory: Trajectory,
    listen: SocketAddr,
    upstream: SocketAddr,
) -> std::io::Result<ProxyHandle> {
    start_shaping_proxy_seeded(trajectory, listen, upstream, 0).await
}

/// Like [`start_shaping_proxy`], with an explicit seed for the loss process.
pub async fn start_shaping_proxy_seeded(
    trajectory: Trajectory,
    listen: SocketAddr,
    upstream: SocketAddr,
    seed: u64,
) -> std::io::Result<ProxyHandle> {
    let listener = TcpListener::bind(listen).await?;
    let local_addr = listener.local_addr()?;
    let bucket = TokenBucket::new(bytes_per_s(&trajectory, 0.0), 0.0);
    let shared = Arc::new(Shared {
        shaper: Mutex::new(Shaper {
            stage: trajectory.stage_index_at(0.0),
            trajectory,
            epoch: Instant::now(),
            bucket,
        }),
        forwarded: AtomicU64::new(0),
        connections: AtomicU64::new(0),
        upstream_failures: AtomicU64::new(0),
        lost_chunks: AtomicU64::new(0),
        recent: Mutex::new(VecDeque::new()),
        seed,
    });
    let (stop, mut stopped) = watch::channel(false);
    let accept_shared = shared.clone();
    let task = tokio::spawn(async move {
        let mut conns = JoinSet::new();
        loop {
            tokio::select! {
                _ = stopped.changed() => break,
                accepted = listener.accept() => {
                    let Ok((client, _)) = accepted else { continue };
                    let id = accept_shared.connections.fetch_add(1, Ordering::Relaxed);
                    conns.spawn(relay(accept_shared.clone(), client, upstream, id));
                }
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
        conns.shutdown().await;
    });
    Ok(ProxyHandle {
        local_addr,
        shared,
        stop,
        task,
    })
}

async fn relay(shared: Arc<Shared>, client: TcpStream, upstream: SocketAddr, id: u64) {
    let server = match TcpStream::connect(upstream).await {
        Ok(s) => s,
        Err(err) => {
            shared.upstream_failures.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(%upstream, %err, "upstream unreachable");
            return;
        }
    };
    let _ = client.set_nodelay(true);
    let _ = server.set_nodelay(true);
    let (client_rd, client_wr) = client.into_split();
    let (server_rd, server_wr) = server.into_split();
    let up = pump(shared.clone(), client_rd, server_wr, id * 2);
    let down = pump(shared, server_rd, client_wr, id * 2 + 1);
    tokio::join!(up, down);
}

/// Shapes one direction: read, take credit, roll loss, queue with delay.
async fn pump(shared: Arc<Shared>, mut rd: OwnedReadHalf, mut wr: OwnedWriteHalf, stream_id: u64) {
    let (tx, mut rx) = mpsc::channel::<(Vec<u8>, Instant)>(DELAY_QUEUE_DEPTH);
    let writer_shared = shared.clone();
    let writer = tokio::spawn(async move {
        while let Some((chunk, release)) = rx.recv().await {
            tokio::time::sleep_until(release.into()).await;
            if wr.write_all(&chunk).await.is_err() {
                return;
            }
            writer_shared.record_forward(chunk.len());
        }
        let _ = wr.shutdown().await;
    });

    let mut rng = ChaCha8Rng::seed_from_u64(shared.seed ^ stream_id.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut buf = vec![0u8; READ_BUF];
    'read: loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        let mut offset = 0;
        while offset < n {
            let (granted, delay_ms, loss_pct) = shared.acquire(n - offset).await;
            let mut extra_s = 0.0;
            if loss_pct > 0.0 {
                while rng.random::<f64>() * 100.0 < loss_pct {
                    shared.lost_chunks.fetch_add(1, Ordering::Relaxed);
                    extra_s += 2.0 * delay_ms / 1000.0;
                    shared.acquire_exact(granted).await;
                }
            }
            let release =
                Instant::now() + Duration::from_secs_f64(delay_ms / 1000.0 + extra_s);
            let chunk = buf[offset..offset + granted].to_vec();
            if tx.send((chunk, release)).await.is_err() {
                break 'read;
            }
            offset += granted;
        }
    }
    drop(tx);
    let _ = writer.await;
}

impl Shared {
    async fn acquire_exact(&self, mut n: usize) {
        while n > 0 {
            let (granted, _, _) = self.acquire(n).await;
            n -= granted;
        }
    }
}
