//! Quality metrics computed from an [`EventLog`].
//!
//! Per-segment bitrates `b_t` come from completed video segments in
//! download order. Link bandwidth `W_t` is the trajectory's effective
//! bandwidth averaged over segment `t`'s download interval.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::Trajectory;
use crate::media::Track;
use crate::player::{EventKind, EventLog};

/// Scaling constant of the bandwidth index.
pub const BANDWIDTH_INDEX_SCALE: f64 = 1e4;
/// Upper bound on the instability window.
pub const MAX_INSTABILITY_WINDOW: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{metric} is undefined: {reason}")]
    Undefined {
        metric: &'static str,
        reason: String,
    },
    #[error("playback never started")]
    FailedStart,
    #[error("cannot aggregate an empty list of reports")]
    NoReports,
}

fn undefined(metric: &'static str, reason: impl Into<String>) -> MetricError {
    MetricError::Undefined {
        metric,
        reason: reason.into(),
    }
}

pub fn quality_switches(log: &EventLog) -> usize {
    log.video_segments()
        .windows(2)
        .filter(|w| w[0].0 != w[1].0)
        .count()
}

/// `(count, total seconds)`; a stall still open at the end of the log is
/// closed at the `End` event (or the last event of a failed run).
pub fn stall_stats(log: &EventLog) -> (usize, f64) {
    let mut count = 0;
    let mut total = 0.0;
    let mut open: Option<f64> = None;
    for e in &log.events {
        match e.kind {
            EventKind::StallStart => {
                count += 1;
                open = Some(e.t);
            }
            EventKind::StallEnd => {
                if let Some(start) = open.take() {
                    total += e.t - start;
                }
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        let close = log
            .end_time()
            .or_else(|| log.events.last().map(|e| e.t))
            .unwrap_or(start);
        total += close - start;
    }
    (count, total)
}

pub fn startup_time(log: &EventLog) -> Result<f64, MetricError> {
    let play = log.events.iter().find(|e| e.kind == EventKind::Play);
    let started = log.events.iter().find(|e| e.kind == EventKind::StartupComplete);
    match (play, started) {
        (Some(p), Some(s)) => Ok(s.t - p.t),
        _ => Err(MetricError::FailedStart),
    }
}

pub fn bitrates(log: &EventLog) -> Vec<f64> {
    log.video_segments()
        .into_iter()
        .map(|(_, b)| f64::from(b))
        .collect()
}

pub fn average_bitrate(log: &EventLog) -> Result<f64, MetricError> {
    let b = bitrates(log);
    if b.is_empty() {
        return Err(undefined("average bitrate", "no completed video segments"));
    }
    Ok(b.iter().sum::<f64>() / b.len() as f64)
}

/// Default window: `min(20, N − 1)`.
pub fn default_instability_window(n: usize) -> usize {
    MAX_INSTABILITY_WINDOW.min(n.saturating_sub(1))
}

/// Sliding instability over positions `t = k+1 ..= N` (1-based):
/// `Σ_{d<k} |b[t−d] − b[t−d−1]| / Σ_{1≤d≤k} b[t−d]`.
pub fn instability_series(b: &[f64], k: usize) -> Result<Vec<f64>, MetricError> {
    let n = b.len();
    if n < 2 {
        return Err(undefined("instability", format!("needs at least 2 segments, got {n}")));
    }
    if k == 0 || k >= n {
        return Err(undefined("instability", format!("window {k} must be in 1..{n}")));
    }
    // 0-based: position t (1-based) has b_t = b[t-1]
    Ok((k + 1..=n)
        .map(|t| {
            let changes: f64 = (0..k).map(|d| (b[t - 1 - d] - b[t - 2 - d]).abs()).sum();
            let level: f64 = (1..=k).map(|d| b[t - 1 - d]).sum();
            changes / level
        })
        .collect())
}

pub fn instability_of(b: &[f64], k: Option<usize>) -> Result<f64, MetricError> {
    let k = k.unwrap_or_else(|| default_instability_window(b.len()));
    let series = instability_series(b, k)?;
    Ok(series.iter().sum::<f64>() / series.len() as f64)
}

pub fn instability(log: &EventLog, k: Option<usize>) -> Result<f64, MetricError> {
    instability_of(&bitrates(log), k)
}

/// `(1/N) Σ |b_t − W_t| / W_t`.
pub fn inefficiency_of(b: &[f64], w: &[f64]) -> Result<f64, MetricError> {
    if b.is_empty() {
        return Err(undefined("inefficiency", "no completed video segments"));
    }
    assert_eq!(b.len(), w.len(), "one bandwidth value per segment");
    let sum: f64 = b.iter().zip(w).map(|(b, w)| (b - w).abs() / w).sum();
    Ok(sum / b.len() as f64)
}

/// `W_t` for every completed video segment, in download order.
pub fn segment_bandwidths(log: &EventLog, traj: &Trajectory) -> Vec<f64> {
    let mut requested: Option<f64> = None;
    let mut out = Vec::new();
    for e in &log.events {
        match e.kind {
            EventKind::SegmentRequested {
                track: Track::Video,
                ..
            } => requested = Some(e.t),
            EventKind::SegmentCompleted {
                track: Track::Video,
                ..
            } => {
                let from = requested.take().unwrap_or(e.t);
                out.push(traj.mean_effective_kbps(from, e.t));
            }
            _ => {}
        }
    }
    out
}

pub fn inefficiency(log: &EventLog, traj: &Trajectory) -> Result<f64, MetricError> {
    inefficiency_of(&bitrates(log), &segment_bandwidths(log, traj))
}

/// `avg / (instability × inefficiency × c)`; `+∞` when either factor is 0.
pub fn bandwidth_index(report: &MetricsReport, c: f64) -> f64 {
    let s = &report.scalars;
    bandwidth_index_of(s.avg_download_bitrate_kbps, s.instability, s.inefficiency, c)
}

fn bandwidth_index_of(avg: f64, instability: f64, inefficiency: f64, c: f64) -> f64 {
    if instability == 0.0 || inefficiency == 0.0 {
        f64::INFINITY
    } else {
        avg / (instability * inefficiency * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoeWeights {
    pub w_bitrate: f64,
    pub w_stall: f64,
    pub w_switch: f64,
    pub w_startup: f64,
}

impl Default for QoeWeights {
    fn default() -> Self {
        Self {
            w_bitrate: 1.0,
            w_stall: 4.0,
            w_switch: 1.0,
            w_startup: 1.0,
        }
    }
}

/// Linear QoE model, capped at 1:
/// `w_b·avg/top − w_s·stall/media − w_sw·switches/N − w_st·min(startup/10, 1)`.
/// A run that never started takes the full startup penalty.
pub fn qoe_score(report: &MetricsReport, weights: &QoeWeights) -> f64 {
    let s = &report.scalars;
    let bitrate_term = if report.top_bitrate_kbps > 0.0 {
        s.avg_download_bitrate_kbps / report.top_bitrate_kbps
    } else {
        0.0
    };
    let stall_term = if report.media_duration_s > 0.0 {
        s.total_stall_time_s / report.media_duration_s
    } else {
        0.0
    };
    let switch_term = if s.segments > 0.0 {
        s.quality_switches / s.segments
    } else {
        0.0
    };
    let startup_term = s.startup_time_s.map_or(1.0, |st| (st / 10.0).min(1.0));
    let score = weights.w_bitrate * bitrate_term
        - weights.w_stall * stall_term
        - weights.w_switch * switch_term
        - weights.w_startup * startup_term;
    score.min(1.0)
}

mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected number, got {t}"))),
        }
    }
}

/// Scalar block of a report. Counts are `f64` so aggregates can hold means.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalarMetrics {
    pub segments: f64,
    pub avg_download_bitrate_kbps: f64,
    /// `None` when playback never started.
    pub startup_time_s: Option<f64>,
    pub stall_count: f64,
    pub total_stall_time_s: f64,
    pub quality_switches: f64,
    pub instability: f64,
    pub inefficiency: f64,
    /// `"inf"` in JSON when instability or inefficiency is 0.
    #[serde(with = "maybe_infinite")]
    pub bandwidth_index: f64,
    pub qoe_score: f64,
    pub run_duration_s: f64,
}

impl ScalarMetrics {
    pub const FIELDS: [&'static str; 11] = [
        "segments",
        "avg_download_bitrate_kbps",
        "startup_time_s",
        "stall_count",
        "total_stall_time_s",
        "quality_switches",
        "instability",
        "inefficiency",
        "bandwidth_index",
        "qoe_score",
        "run_duration_s",
    ];

    pub fn values(&self) -> [Option<f64>; 11] {
        [
            Some(self.segments),
            Some(self.avg_download_bitrate_kbps),
            self.startup_time_s,
            Some(self.stall_count),
            Some(self.total_stall_time_s),
            Some(self.quality_switches),
            Some(self.instability),
            Some(self.inefficiency),
            Some(self.bandwidth_index),
            Some(self.qoe_score),
            Some(self.run_duration_s),
        ]
    }

    fn from_values(v: [Option<f64>; 11]) -> Self {
        let f = |x: Option<f64>| x.unwrap_or(0.0);
        Self {
            segments: f(v[0]),
            avg_download_bitrate_kbps: f(v[1]),
            startup_time_s: v[2],
            stall_count: f(v[3]),
            total_stall_time_s: f(v[4]),
            quality_switches: f(v[5]),
            instability: f(v[6]),
            inefficiency: f(v[7]),
            bandwidth_index: f(v[8]),
            qoe_score: f(v[9]),
            run_duration_s: f(v[10]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSeries {
    /// `(t, buffer level s)` at the sampling cadence.
    pub buffer: Vec<(f64, f64)>,
    /// `(completion t, b_t kbps)` per video segment.
    pub bitrate: Vec<(f64, f64)>,
    /// Sliding instability, one value per valid position.
    pub instability: Vec<f64>,
    /// `W_t` per video segment.
    pub bandwidth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub profile: String,
    pub trajectory: String,
    pub top_bitrate_kbps: f64,
    pub media_duration_s: f64,
    pub instability_window: usize,
    pub scalars: ScalarMetrics,
    pub series: MetricSeries,
}

pub fn compute_report(log: &EventLog, traj: &Trajectory) -> Result<MetricsReport, MetricError> {
    let b = bitrates(log);
    let avg = average_bitrate(log)?;
    let w = segment_bandwidths(log, traj);
    let ineff = inefficiency_of(&b, &w)?;
    let window = default_instability_window(b.len());
    // a single segment cannot change quality
    let (inst, inst_series) = if b.len() < 2 {
        (0.0, Vec::new())
    } else {
        let series = instability_series(&b, window)?;
        (series.iter().sum::<f64>() / series.len() as f64, series)
    };
    let (stalls, stall_time) = stall_stats(log);
    let mut buffer = Vec::new();
    let mut bitrate = Vec::new();
    for e in &log.events {
        match e.kind {
            EventKind::BufferSample { level_s } => buffer.push((e.t, level_s)),
            _ => {
                if let Some((_, kbps)) = e.video_completion() {
                    bitrate.push((e.t, f64::from(kbps)));
                }
            }
        }
    }
    let mut report = MetricsReport {
        profile: log.header.profile.clone(),
        trajectory: log.header.trajectory.clone(),
        top_bitrate_kbps: log.header.ladder_kbps.iter().copied().max().map_or(0.0, f64::from),
        media_duration_s: log.header.media_duration_s,
        instability_window: window,
        scalars: ScalarMetrics {
            segments: b.len() as f64,
            avg_download_bitrate_kbps: avg,
            startup_time_s: startup_time(log).ok(),
            stall_count: stalls as f64,
            total_stall_time_s: stall_time,
            quality_switches: quality_switches(log) as f64,
            instability: inst,
            inefficiency: ineff,
            bandwidth_index: bandwidth_index_of(avg, inst, ineff, BANDWIDTH_INDEX_SCALE),
            qoe_score: 0.0,
            run_duration_s: log
                .end_time()
                .or_else(|| log.events.last().map(|e| e.t))
                .unwrap_or(0.0),
        },
        series: MetricSeries {
            buffer,
            bitrate,
            instability: inst_series,
            bandwidth: w,
        },
    };
    report.scalars.qoe_score = qoe_score(&report, &QoeWeights::default());
    Ok(report)
}

/// Per-field statistics across runs. Series are not aggregated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub mean: ScalarMetrics,
    pub min: ScalarMetrics,
    pub max: ScalarMetrics,
    /// Population standard deviation.
    pub stddev: ScalarMetrics,
}

pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<AggregateReport, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::NoReports);
    }
    let rows: Vec<[Option<f64>; 11]> = reports.iter().map(|r| r.scalars.values()).collect();
    let mut mean = [None; 11];
    let mut min = [None; 11];
    let mut max = [None; 11];
    let mut stddev = [None; 11];
    for field in 0..11 {
        let vals: Vec<f64> = rows.iter().filter_map(|row| row[field]).collect();
        if vals.is_empty() {
            continue;
        }
        let n = vals.len() as f64;
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        min[field] = Some(lo);
        max[field] = Some(hi);
        if lo == hi {
            // also covers all-infinite columns, where the arithmetic would give NaN
            mean[field] = Some(lo);
            stddev[field] = Some(0.0);
        } else if vals.iter().any(|v| v.is_infinite()) {
            mean[field] = Some(vals.iter().sum::<f64>() / n);
            stddev[field] = Some(f64::INFINITY);
        } else {
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[field] = Some(m);
            stddev[field] = Some(var.sqrt());
        }
    }
    Ok(AggregateReport {
        runs: reports.len(),
        mean: ScalarMetrics::from_values(mean),
        min: ScalarMetrics::from_values(min),
        max: ScalarMetrics::from_values(max),
        stddev: ScalarMetrics::from_values(stddev),
    })
}
