#![allow(dead_code)]

use abrbench::link::{LinkStage, RepeatMode, Trajectory};
use abrbench::media::Track;
use abrbench::player::{EventKind, EventLog, EventLogHeader, PlaybackEvent, PlayerConfig};
use rand::{Rng, RngCore};

/// Integer-millisecond stage: (bandwidth kbps, duration ms, one-way delay ms, loss %).
#[derive(Debug, Clone, Copy)]
pub struct MsStage {
    pub kbps: u64,
    pub dur_ms: u64,
    pub delay_ms: u64,
    pub loss_pct: u64,
}

impl MsStage {
    pub fn to_stage(self) -> LinkStage {
        LinkStage::new(self.kbps as f64, self.dur_ms as f64 / 1000.0)
            .with_delay(self.delay_ms as f64)
            .with_loss(self.loss_pct as f64)
    }
}

pub fn random_ms_stages(rng: &mut impl RngCore, max_stages: usize) -> Vec<MsStage> {
    let n = rng.random_range(1..=max_stages);
    (0..n)
        .map(|_| MsStage {
            kbps: rng.random_range(100..=5000),
            dur_ms: rng.random_range(1..=30_000),
            delay_ms: rng.random_range(0..=100),
            loss_pct: if rng.random_bool(0.3) { rng.random_range(1..=20) } else { 0 },
        })
        .collect()
}

pub fn trajectory_of(stages: &[MsStage], cycle: bool) -> Trajectory {
    Trajectory::new(
        "oracle",
        stages.iter().map(|s| s.to_stage()).collect(),
        if cycle { RepeatMode::Cycle } else { RepeatMode::Clamp },
    )
    .expect("generated stages are valid")
}

fn stage_at_ms(stages: &[MsStage], cycle: bool, ms: u64) -> MsStage {
    let total: u64 = stages.iter().map(|s| s.dur_ms).sum();
    let pos = if cycle { ms % total } else { ms };
    let mut acc = 0;
    for s in stages {
        if pos < acc + s.dur_ms {
            return *s;
        }
        acc += s.dur_ms;
    }
    *stages.last().unwrap()
}

/// Finish time (seconds) of `size_bytes` requested at `start_ms`, by stepping
/// the link one millisecond at a time. kbps is numerically bits per ms.
pub fn fixed_step_finish(stages: &[MsStage], cycle: bool, start_ms: u64, size_bytes: u64) -> f64 {
    let rtt_ms = 2 * stage_at_ms(stages, cycle, start_ms).delay_ms;
    let mut t = start_ms + rtt_ms;
    let mut remaining = size_bytes as f64 * 8.0;
    loop {
        let s = stage_at_ms(stages, cycle, t);
        let bits_this_ms = s.kbps as f64 * (100 - s.loss_pct) as f64 / 100.0;
        if remaining <= bits_this_ms {
            return (t as f64 + remaining / bits_this_ms) / 1000.0;
        }
        remaining -= bits_this_ms;
        t += 1;
    }
}

/// Reference scalar values recomputed straight from the raw events.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveScalars {
    pub segments: f64,
    pub avg: f64,
    pub startup: Option<f64>,
    pub stalls: f64,
    pub stall_time: f64,
    pub switches: f64,
    pub instability: f64,
    pub inefficiency: f64,
    pub bandwidth_index: f64,
    pub qoe: f64,
    pub run_duration: f64,
}

/// Time-weighted mean of a clamp-mode trajectory's effective bandwidth.
pub fn naive_mean_kbps(traj: &Trajectory, from: f64, to: f64) -> f64 {
    let stages = traj.stages();
    let eff = |s: &LinkStage| s.bandwidth_kbps * (1.0 - s.loss_pct / 100.0);
    let mut start = 0.0;
    let mut bounds = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        let end = if i + 1 == stages.len() { f64::INFINITY } else { start + s.duration_s };
        bounds.push((start, end, eff(s)));
        start += s.duration_s;
    }
    if !(to > from) {
        let (_, _, r) = bounds.iter().copied().find(|&(a, b, _)| from >= a && from < b).unwrap_or(*bounds.last().unwrap());
        return r;
    }
    let mut area = 0.0;
    for (a, b, r) in bounds {
        if b <= from || a >= to {
            continue;
        }
        area += r * (b.min(to) - a.max(from));
    }
    area / (to - from)
}

pub fn naive_scalars(log: &EventLog, traj: &Trajectory) -> NaiveScalars {
    let mut b = Vec::new();
    let mut reps = Vec::new();
    let mut w = Vec::new();
    let mut requested = None;
    let mut play = None;
    let mut started = None;
    let mut stalls = 0usize;
    let mut stall_time = 0.0;
    let mut open = None;
    let mut end = None;
    for e in &log.events {
        match &e.kind {
            EventKind::Play if play.is_none() => play = Some(e.t),
            EventKind::StartupComplete if started.is_none() => started = Some(e.t),
            EventKind::SegmentRequested { track: Track::Video, .. } => requested = Some(e.t),
            EventKind::SegmentCompleted {
                track: Track::Video,
                rep_id,
                bitrate_kbps,
                ..
            } => {
                b.push(*bitrate_kbps as f64);
                reps.push(*rep_id);
                w.push(naive_mean_kbps(traj, requested.take().unwrap_or(e.t), e.t));
            }
            EventKind::StallStart => {
                stalls += 1;
                open = Some(e.t);
            }
            EventKind::StallEnd => {
                if let Some(s) = open.take() {
                    stall_time += e.t - s;
                }
            }
            EventKind::End => end = Some(e.t),
            _ => {}
        }
    }
    let last_t = log.events.last().map(|e| e.t).unwrap_or(0.0);
    if let Some(s) = open {
        stall_time += end.unwrap_or(last_t) - s;
    }
    let n = b.len();
    let avg = b.iter().sum::<f64>() / n as f64;
    let switches = reps.windows(2).filter(|p| p[0] != p[1]).count();
    let instability = if n < 2 {
        0.0
    } else {
        let k = 20.min(n - 1);
        let mut total = 0.0;
        let mut count = 0usize;
        for t in (k + 1)..=n {
            // 1-based b_t is b[t - 1]
            let mut num = 0.0;
            for d in 0..k {
                num += (b[t - 1 - d] - b[t - 2 - d]).abs();
            }
            let mut den = 0.0;
            for d in 1..=k {
                den += b[t - 1 - d];
            }
            total += num / den;
            count += 1;
        }
        total / count as f64
    };
    let mut ineff = 0.0;
    for i in 0..n {
        ineff += (b[i] - w[i]).abs() / w[i];
    }
    let inefficiency = ineff / n as f64;
    let bandwidth_index = if instability == 0.0 || inefficiency == 0.0 {
        f64::INFINITY
    } else {
        avg / (instability * inefficiency * 1e4)
    };
    let startup = match (play, started) {
        (Some(p), Some(s)) => Some(s - p),
        _ => None,
    };
    let top = log.header.ladder_kbps.iter().copied().max().unwrap_or(0) as f64;
    let qoe = (avg / top - 4.0 * (stall_time / log.header.media_duration_s) - switches as f64 / n as f64
        - startup.map_or(1.0, |s| (s / 10.0).min(1.0)))
    .min(1.0);
    NaiveScalars {
        segments: n as f64,
        avg,
        startup,
        stalls: stalls as f64,
        stall_time,
        switches: switches as f64,
        instability,
        inefficiency,
        bandwidth_index,
        qoe,
        run_duration: end.unwrap_or(last_t),
    }
}

/// A structurally valid but otherwise arbitrary playback log: random
/// representation picks, download times, stalls, optional audio, and
/// sometimes no startup or an unterminated stall.
pub fn random_log(rng: &mut impl RngCore, ladder: &[u32], segment_s: f64) -> EventLog {
    let n = rng.random_range(1..=60usize);
    let mut events = Vec::new();
    let mut t = 0.0f64;
    let push = |events: &mut Vec<PlaybackEvent>, t: f64, kind: EventKind| events.push(PlaybackEvent { t, kind });
    push(&mut events, t, EventKind::Play);
    let never_starts = rng.random_bool(0.05);
    let mut started = false;
    let mut stalled = false;
    let mut last_rep: Option<usize> = None;
    let sticky = rng.random_bool(0.3);
    for index in 0..n {
        let rep = match last_rep {
            Some(r) if sticky && rng.random_bool(0.8) => r,
            _ => rng.random_range(0..ladder.len()),
        };
        push(&mut events, t, EventKind::SegmentRequested { track: Track::Video, index, rep_id: Some(rep) });
        let dl = rng.random_range(0.05..8.0);
        t += dl;
        let bytes = (ladder[rep] as f64 * 1000.0 * segment_s / 8.0).round() as u64;
        push(
            &mut events,
            t,
            EventKind::SegmentCompleted {
                track: Track::Video,
                index,
                rep_id: Some(rep),
                bitrate_kbps: ladder[rep],
                bytes,
                download_s: dl,
            },
        );
        if let Some(prev) = last_rep.filter(|&p| p != rep) {
            push(&mut events, t, EventKind::QualitySwitch { from_rep: prev, to_rep: rep });
        }
        last_rep = Some(rep);
        if rng.random_bool(0.5) {
            push(&mut events, t, EventKind::SegmentRequested { track: Track::Audio, index, rep_id: None });
            let adl = rng.random_range(0.01..1.0);
            t += adl;
            push(
                &mut events,
                t,
                EventKind::SegmentCompleted {
                    track: Track::Audio,
                    index,
                    rep_id: None,
                    bitrate_kbps: 128,
                    bytes: 64_000,
                    download_s: adl,
                },
            );
        }
        if !started && !never_starts {
            started = true;
            push(&mut events, t, EventKind::StartupComplete);
        } else if started && !stalled && rng.random_bool(0.15) {
            t += rng.random_range(0.0..3.0);
            stalled = true;
            push(&mut events, t, EventKind::StallStart);
        } else if stalled && rng.random_bool(0.6) {
            t += rng.random_range(0.0..2.0);
            stalled = false;
            push(&mut events, t, EventKind::StallEnd);
        }
        if rng.random_bool(0.5) {
            push(&mut events, t, EventKind::BufferSample { level_s: rng.random_range(0.0..30.0) });
        }
    }
    if stalled && rng.random_bool(0.5) {
        t += rng.random_range(0.0..2.0);
        push(&mut events, t, EventKind::StallEnd);
    }
    t += rng.random_range(0.0..10.0);
    push(&mut events, t, EventKind::End);
    let media = n as f64 * segment_s;
    EventLog {
        header: EventLogHeader {
            eventlog_version: 1,
            config: PlayerConfig::default(),
            profile: "random".into(),
            ladder_kbps: ladder.to_vec(),
            segment_count: n,
            media_duration_s: media,
            trajectory: "oracle".into(),
            seed: rng.next_u64(),
            failure: None,
        },
        events,
    }
}

/// Every event's time is non-decreasing.
pub fn is_time_ordered(log: &EventLog) -> bool {
    log.events.windows(2).all(|w| w[0].t <= w[1].t)
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_f64(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}
