use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRAJECTORY_VERSION: u32 = 1;

/// The schedule replayed in the experiments shipped with the repo.
pub const PAPER_FIG4_JSON: &str = include_str!("../../../../trajectories/paper_fig4.json");
pub const PAPER_FIG4_NAME: &str = "paper_fig4";

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("trajectory parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("stage {index}: {message}")]
    Stage { index: usize, message: String },
    #[error("trajectory must contain at least one stage")]
    Empty,
    #[error("trajectory version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("reading trajectory: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkStage {
    pub bandwidth_kbps: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(default)]
    pub loss_pct: f64,
}

impl LinkStage {
    pub fn new(bandwidth_kbps: f64, duration_s: f64) -> Self {
        Self {
            bandwidth_kbps,
            duration_s,
            delay_ms: 0.0,
            loss_pct: 0.0,
        }
    }

    pub fn with_delay(mut self, delay_ms: f64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    pub fn with_loss(mut self, loss_pct: f64) -> Self {
        self.loss_pct = loss_pct;
        self
    }

    fn check(&self) -> Result<(), String> {
        if !(self.bandwidth_kbps > 0.0) || !self.bandwidth_kbps.is_finite() {
            return Err(format!("bandwidth_kbps must be > 0 (got {})", self.bandwidth_kbps));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(format!("duration_s must be > 0 (got {})", self.duration_s));
        }
        if !(self.delay_ms >= 0.0) || !self.delay_ms.is_finite() {
            return Err(format!("delay_ms must be >= 0 (got {})", self.delay_ms));
        }
        if !(0.0..100.0).contains(&self.loss_pct) {
            return Err(format!("loss_pct must be in [0, 100) (got {})", self.loss_pct));
        }
        Ok(())
    }

    fn params(&self) -> LinkParams {
        LinkParams {
            bandwidth_kbps: self.bandwidth_kbps,
            delay_ms: self.delay_ms,
            loss_pct: self.loss_pct,
        }
    }
}

/// Link conditions active at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub bandwidth_kbps: f64,
    pub delay_ms: f64,
    pub loss_pct: f64,
}

impl LinkParams {
    /// Bandwidth after multiplicative loss, in kbps.
    pub fn effective_kbps(&self) -> f64 {
        self.bandwidth_kbps * (1.0 - self.loss_pct / 100.0)
    }

    pub fn rtt_s(&self) -> f64 {
        2.0 * self.delay_ms / 1000.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatMode {
    /// Hold the final stage forever.
    #[default]
    Clamp,
    /// Start over from the first stage.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryDoc {
    trajectory_version: u32,
    #[serde(default)]
    repeat: RepeatMode,
    stages: Vec<LinkStage>,
}

/// A piecewise-constant link schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    name: String,
    stages: Vec<LinkStage>,
    repeat: RepeatMode,
    // starts[i] = Σ durations of stages before i; starts[len] = total
    starts: Vec<f64>,
}

/// Where a stage instance sits on the absolute timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Span {
    index: usize,
    cycle: u64,
    start: f64,
    end: f64,
}

/// Portion of a transfer drained within one stage instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrainSlice {
    pub stage_index: usize,
    pub from: f64,
    pub to: f64,
    pub bits: f64,
    pub effective_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPlan {
    /// Instant the first byte arrives (`start + rtt`).
    pub first_byte: f64,
    pub finish: f64,
    pub slices: Vec<DrainSlice>,
}

impl Trajectory {
    pub fn new(
        name: impl Into<String>,
        stages: Vec<LinkStage>,
        repeat: RepeatMode,
    ) -> Result<Self, TrajectoryError> {
        if stages.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (index, stage) in stages.iter().enumerate() {
            stage
                .check()
                .map_err(|message| TrajectoryError::Stage { index, message })?;
        }
        let mut starts = Vec::with_capacity(stages.len() + 1);
        let mut acc = 0.0;
        starts.push(acc);
        for s in &stages {
            acc += s.duration_s;
            starts.push(acc);
        }
        Ok(Self {
            name: name.into(),
            stages,
            repeat,
            starts,
        })
    }

    /// A single stage held forever.
    pub fn constant(bandwidth_kbps: f64, delay_ms: f64) -> Self {
        Self::new(
            format!("constant_{bandwidth_kbps}kbps"),
            vec![LinkStage::new(bandwidth_kbps, 1.0).with_delay(delay_ms)],
            RepeatMode::Clamp,
        )
        .expect("valid constant trajectory")
    }

    pub fn paper_fig4() -> Self {
        load_trajectory(PAPER_FIG4_JSON, PAPER_FIG4_NAME).expect("bundled trajectory is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stages(&self) -> &[LinkStage] {
        &self.stages
    }

    pub fn repeat(&self) -> RepeatMode {
        self.repeat
    }

    pub fn total_duration(&self) -> f64 {
        self.starts[self.stages.len()]
    }

    /// Start instants of each stage within the first pass.
    pub fn stage_starts(&self) -> &[f64] {
        &self.starts[..self.stages.len()]
    }

    pub fn to_json(&self) -> String {
        let doc = TrajectoryDoc {
            trajectory_version: TRAJECTORY_VERSION,
            repeat: self.repeat,
            stages: self.stages.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("trajectory serializes")
    }

    pub fn load(path: &Path) -> Result<Self, TrajectoryError> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectory".into());
        load_trajectory(&text, &name)
    }

    pub fn stage_index_at(&self, t: f64) -> usize {
        self.span_at(t).index
    }

    pub fn params_at(&self, t: f64) -> LinkParams {
        self.stages[self.span_at(t).index].params()
    }

    fn span_in_cycle(&self, index: usize, cycle: u64) -> Span {
        let last = self.stages.len() - 1;
        let base = cycle as f64 * self.total_duration();
        let end = match self.repeat {
            RepeatMode::Clamp if index == last => f64::INFINITY,
            _ => base + self.starts[index + 1],
        };
        Span {
            index,
            cycle,
            start: base + self.starts[index],
            end,
        }
    }

    fn span_at(&self, t: f64) -> Span {
        let t = t.max(0.0);
        let total = self.total_duration();
        let (cycle, offset) = match self.repeat {
            RepeatMode::Clamp => (0, t),
            RepeatMode::Cycle => {
                let cycle = (t / total).floor();
                (cycle as u64, t - cycle * total)
            }
        };
        // half-open [start, end): the last start <= offset wins
        let index = match self.starts[1..self.stages.len()]
            .partition_point(|&boundary| boundary <= offset)
        {
            i if i < self.stages.len() => i,
            _ => self.stages.len() - 1,
        };
        self.span_in_cycle(index, cycle)
    }

    fn next_span(&self, span: Span) -> Span {
        if span.index + 1 < self.stages.len() {
            self.span_in_cycle(span.index + 1, span.cycle)
        } else {
            match self.repeat {
                RepeatMode::Clamp => span,
                RepeatMode::Cycle => self.span_in_cycle(0, span.cycle + 1),
            }
        }
    }

    /// Exact drain schedule of `size_bytes` requested at `start_t`.
    ///
    /// The first byte arrives one RTT (taken at `start_t`) after the request;
    /// the payload then drains at each stage's effective bandwidth.
    pub fn transfer_plan(&self, start_t: f64, size_bytes: u64) -> TransferPlan {
        let first_byte = start_t + self.params_at(start_t).rtt_s();
        let mut remaining = size_bytes as f64 * 8.0;
        let mut slices = Vec::new();
        if remaining <= 0.0 {
            return TransferPlan {
                first_byte,
                finish: first_byte,
                slices,
            };
        }
        let mut span = self.span_at(first_byte);
        let mut now = first_byte;
        loop {
            let rate = self.stages[span.index].params().effective_kbps() * 1000.0;
            let capacity = rate * (span.end - now);
            if remaining <= capacity {
                let finish = now + remaining / rate;
                slices.push(DrainSlice {
                    stage_index: span.index,
                    from: now,
                    to: finish,
                    bits: remaining,
                    effective_bps: rate,
                });
                return TransferPlan {
                    first_byte,
                    finish,
                    slices,
                };
            }
            if capacity > 0.0 {
                slices.push(DrainSlice {
                    stage_index: span.index,
                    from: now,
                    to: span.end,
                    bits: capacity,
                    effective_bps: rate,
                });
                remaining -= capacity;
            }
            now = span.end;
            span = self.next_span(span);
        }
    }

    pub fn transfer_finish_time(&self, start_t: f64, size_bytes: u64) -> f64 {
        self.transfer_plan(start_t, size_bytes).finish
    }

    /// Time-weighted mean effective bandwidth (kbps) over `[from, to]`.
    /// A degenerate interval yields the instantaneous value at `from`.
    pub fn mean_effective_kbps(&self, from: f64, to: f64) -> f64 {
        if !(to > from) {
            return self.params_at(from).effective_kbps();
        }
        let mut span = self.span_at(from);
        let mut now = from;
        let mut area = 0.0;
        while now < to {
            let end = span.end.min(to);
            area += self.stages[span.index].params().effective_kbps() * (end - now);
            now = end;
            span = self.next_span(span);
        }
        area / (to - from)
    }
}

/// Parses a trajectory document; `name` labels it in logs and reports.
pub fn load_trajectory(document: &str, name: &str) -> Result<Trajectory, TrajectoryError> {
    let doc: TrajectoryDoc =
        serde_json::from_str(document).map_err(|e| TrajectoryError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
    if doc.trajectory_version != TRAJECTORY_VERSION {
        return Err(TrajectoryError::UnsupportedVersion(doc.trajectory_version));
    }
    Trajectory::new(name, doc.stages, doc.repeat)
}
