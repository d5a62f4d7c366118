//! Rate-adaptation policies.
//!
//! A policy is a pure function of an [`AbrContext`] and its numeric
//! parameters. Policies are looked up by name in an [`AbrRegistry`], which
//! is how experiment configs select them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::media::Representation;

pub type AbrParams = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputSample {
    pub bytes: u64,
    pub download_s: f64,
}

impl ThroughputSample {
    pub fn kbps(&self) -> f64 {
        self.bytes as f64 * 8.0 / self.download_s / 1000.0
    }
}

/// Everything a policy may observe when picking the next segment.
#[derive(Debug, Clone, Copy)]
pub struct AbrContext<'a> {
    pub buffer_level_s: f64,
    pub buffer_capacity_s: f64,
    pub throughput_samples: &'a [ThroughputSample],
    pub last_rep_id: Option<usize>,
    pub segment_index: usize,
    pub ladder: &'a [Representation],
}

pub trait AbrPolicy: Send + Sync {
    /// Returns a representation id; the player clamps it to the ladder.
    fn choose(&self, ctx: &AbrContext<'_>, params: &AbrParams) -> usize;
}

impl<F> AbrPolicy for F
where
    F: Fn(&AbrContext<'_>, &AbrParams) -> usize + Send + Sync,
{
    fn choose(&self, ctx: &AbrContext<'_>, params: &AbrParams) -> usize {
        self(ctx, params)
    }
}

fn param(params: &AbrParams, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Harmonic mean (kbps) of the last `window` samples.
pub fn harmonic_mean_kbps(samples: &[ThroughputSample], window: usize) -> Option<f64> {
    let window = window.max(1);
    let tail = &samples[samples.len().saturating_sub(window)..];
    if tail.is_empty() {
        return None;
    }
    let inv: f64 = tail.iter().map(|s| 1.0 / s.kbps()).sum();
    Some(tail.len() as f64 / inv)
}

/// Highest representation whose bitrate fits under `budget_kbps`, else 0.
pub fn highest_fitting(ladder: &[Representation], budget_kbps: f64) -> usize {
    ladder
        .iter()
        .rposition(|r| f64::from(r.bitrate_kbps) <= budget_kbps)
        .unwrap_or(0)
}

/// Throughput rule. Params: `window_k` (5), `safety_factor` (0.9).
pub fn abr_throughput(ctx: &AbrContext<'_>, params: &AbrParams) -> usize {
    let window = param(params, "window_k", 5.0) as usize;
    let safety = param(params, "safety_factor", 0.9);
    match harmonic_mean_kbps(ctx.throughput_samples, window) {
        Some(estimate) => highest_fitting(ctx.ladder, safety * estimate),
        None => 0,
    }
}

/// Linear buffer map. Params: `reservoir_s` (5), `cushion_s` (20).
pub fn abr_buffer(ctx: &AbrContext<'_>, params: &AbrParams) -> usize {
    let reservoir = param(params, "reservoir_s", 5.0);
    let cushion = param(params, "cushion_s", 20.0);
    let top = ctx.ladder.len().saturating_sub(1);
    let level = ctx.buffer_level_s;
    if level <= reservoir {
        0
    } else if level >= reservoir + cushion {
        top
    } else {
        (((level - reservoir) / cushion * top as f64).floor() as usize).min(top)
    }
}

/// Throughput rule whose safety factor rises linearly with buffer fill.
/// Params: `window_k` (5), `min_safety` (0.5), `max_safety` (1.0).
pub fn abr_hybrid(ctx: &AbrContext<'_>, params: &AbrParams) -> usize {
    let window = param(params, "window_k", 5.0) as usize;
    let lo = param(params, "min_safety", 0.5);
    let hi = param(params, "max_safety", 1.0);
    let Some(estimate) = harmonic_mean_kbps(ctx.throughput_samples, window) else {
        return 0;
    };
    let fill = if ctx.buffer_capacity_s > 0.0 {
        (ctx.buffer_level_s / ctx.buffer_capacity_s).clamp(0.0, 1.0)
    } else {
        0.0
    };
    highest_fitting(ctx.ladder, (lo + (hi - lo) * fill) * estimate)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbrError {
    #[error("an ABR policy named `{0}` is already registered")]
    Duplicate(String),
    #[error("unknown ABR policy `{0}`")]
    Unknown(String),
}

#[derive(Clone, Default)]
pub struct AbrRegistry {
    policies: BTreeMap<String, Arc<dyn AbrPolicy>>,
}

impl fmt::Debug for AbrRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.policies.keys()).finish()
    }
}

impl AbrRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding `throughput`, `buffer` and `hybrid`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("throughput", abr_throughput).unwrap();
        r.register("buffer", abr_buffer).unwrap();
        r.register("hybrid", abr_hybrid).unwrap();
        r
    }

    pub fn register<P>(&mut self, name: impl Into<String>, policy: P) -> Result<(), AbrError>
    where
        P: AbrPolicy + 'static,
    {
        let name = name.into();
        if self.policies.contains_key(&name) {
            return Err(AbrError::Duplicate(name));
        }
        self.policies.insert(name, Arc::new(policy));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn AbrPolicy>, AbrError> {
        self.policies
            .get(name)
            .cloned()
            .ok_or_else(|| AbrError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.policies.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.policies.keys().map(String::as_str)
    }
}
