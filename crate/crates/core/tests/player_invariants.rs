use abrbench::link::{LinkStage, RepeatMode, Trajectory};
use abrbench::media::{build_manifest, builtin_profile, Manifest, SizeJitter, Track};
use abrbench::metrics::{compute_report, quality_switches, stall_stats};
use abrbench::player::{run_playback, AbrRegistry, AbrSpec, EventKind, EventLog, PlayerConfig, VirtualLink};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    stages: Vec<(f64, f64, f64, f64)>,
    cycle: bool,
    profile: &'static str,
    total_s: f64,
    jitter: bool,
    abr: &'static str,
    capacity: f64,
    startup: f64,
    rebuffer: f64,
    audio: bool,
    seed: u64,
}

fn case() -> impl Strategy<Value = Case> {
    (
        prop::collection::vec((150.0f64..6000.0, 2.0f64..60.0, 0.0f64..100.0, 0.0f64..15.0), 1..6),
        any::<bool>(),
        prop::sample::select(vec!["fullhd", "amazon"]),
        30.0f64..160.0,
        any::<bool>(),
        prop::sample::select(vec!["throughput", "buffer", "hybrid"]),
        (8.0f64..40.0, 0.5f64..8.0, 0.5f64..8.0),
        any::<bool>(),
        any::<u64>(),
    )
        .prop_map(|(stages, cycle, profile, total_s, jitter, abr, (capacity, startup, rebuffer), audio, seed)| Case {
            stages,
            cycle,
            profile,
            total_s,
            jitter,
            abr,
            capacity,
            startup,
            rebuffer,
            audio,
            seed,
        })
}

impl Case {
    fn trajectory(&self) -> Trajectory {
        let stages = self
            .stages
            .iter()
            .map(|&(bw, d, delay, loss)| LinkStage::new(bw, d).with_delay(delay).with_loss(loss))
            .collect();
        let repeat = if self.cycle { RepeatMode::Cycle } else { RepeatMode::Clamp };
        Trajectory::new("prop", stages, repeat).unwrap()
    }

    fn manifest(&self) -> Manifest {
        let mut p = builtin_profile(self.profile).unwrap();
        p.total_duration_s = self.total_s;
        if self.jitter {
            p.size_jitter = Some(SizeJitter { pct: 10.0, seed: 5 });
        }
        build_manifest(p).unwrap()
    }

    fn config(&self) -> PlayerConfig {
        PlayerConfig {
            buffer_capacity_s: self.capacity,
            startup_threshold_s: self.startup,
            rebuffer_threshold_s: self.rebuffer,
            abr: AbrSpec::named(self.abr),
            fetch_audio: self.audio,
        }
    }

    fn run(&self) -> (Manifest, Trajectory, EventLog) {
        let manifest = self.manifest();
        let traj = self.trajectory();
        let mut link = VirtualLink::new(traj.clone());
        let log = run_playback(&manifest, &mut link, &self.config(), self.seed, &AbrRegistry::with_builtins()).unwrap();
        (manifest, traj, log)
    }
}

/// Replays the log, crediting a segment once its last track lands and
/// draining only while playing, and checks every buffer sample against it.
fn check_buffer_conservation(manifest: &Manifest, config: &PlayerConfig, log: &EventLog) -> Result<(), String> {
    let audio = config.fetch_audio && manifest.profile.include_audio;
    let mut playing = false;
    let mut credited = 0.0;
    let mut played = 0.0;
    let mut last_t = 0.0;
    for e in &log.events {
        if playing {
            played += e.t - last_t;
        }
        last_t = e.t;
        let level = credited - played;
        match &e.kind {
            EventKind::SegmentCompleted { track, index, .. } => {
                let last_track = if audio { Track::Audio } else { Track::Video };
                if *track == last_track {
                    credited += manifest.segment_duration(*index);
                }
            }
            EventKind::BufferSample { level_s } => {
                if (level - level_s).abs() > 1e-6 {
                    return Err(format!("t={}: sample {level_s}, replayed {level}", e.t));
                }
            }
            EventKind::StartupComplete | EventKind::StallEnd => playing = true,
            EventKind::StallStart => {
                if level.abs() > 1e-6 {
                    return Err(format!("stall at t={} with {level} s buffered", e.t));
                }
                playing = false;
            }
            EventKind::End => {
                if level.abs() > 1e-6 {
                    return Err(format!("ended with {level} s buffered"));
                }
                playing = false;
            }
            _ => {}
        }
        let level = credited - played;
        if level > config.buffer_capacity_s + 1e-6 || level < -1e-6 {
            return Err(format!("t={}: level {level} outside [0, {}]", e.t, config.buffer_capacity_s));
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn buffer_is_conserved(c in case()) {
        let (manifest, _, log) = c.run();
        prop_assert!(log.header.failure.is_none());
        if let Err(e) = check_buffer_conservation(&manifest, &c.config(), &log) {
            return Err(TestCaseError::fail(e));
        }
    }

    #[test]
    fn wall_time_is_startup_plus_media_plus_stalls(c in case()) {
        let (manifest, _, log) = c.run();
        let startup = log.events.iter().find(|e| e.kind == EventKind::StartupComplete).unwrap().t;
        let end = log.end_time().unwrap();
        let (_, stalled) = stall_stats(&log);
        let media = manifest.profile.total_duration_s;
        prop_assert!((end - (startup + media + stalled)).abs() < 1e-6, "end {} startup {} media {} stalled {}", end, startup, media, stalled);
    }

    #[test]
    fn switches_bracket_changed_video_segments(c in case()) {
        let (manifest, _, log) = c.run();
        let mut last: Option<usize> = None;
        let mut expect_switch: Option<(usize, usize)> = None;
        let mut video = 0;
        for e in &log.events {
            if let Some((from, to)) = expect_switch.take() {
                prop_assert_eq!(&e.kind, &EventKind::QualitySwitch { from_rep: from, to_rep: to });
                continue;
            }
            match e.kind {
                EventKind::SegmentCompleted { track: Track::Video, rep_id: Some(rep), index, .. } => {
                    prop_assert_eq!(index, video);
                    video += 1;
                    if let Some(prev) = last.filter(|&p| p != rep) {
                        expect_switch = Some((prev, rep));
                    }
                    last = Some(rep);
                }
                EventKind::QualitySwitch { .. } => prop_assert!(false, "unexpected switch at t={}", e.t),
                _ => {}
            }
        }
        prop_assert_eq!(video, manifest.segment_count);
        let switch_events = log.events.iter().filter(|e| matches!(e.kind, EventKind::QualitySwitch { .. })).count();
        prop_assert_eq!(switch_events, quality_switches(&log));
    }

    #[test]
    fn events_are_ordered_and_runs_repeat(c in case()) {
        let (_, traj, log) = c.run();
        prop_assert!(log.events.windows(2).all(|w| w[0].t <= w[1].t));
        let (_, _, again) = c.run();
        prop_assert_eq!(log.to_jsonl(), again.to_jsonl());
        let report = compute_report(&log, &traj).unwrap();
        prop_assert!(report.scalars.qoe_score <= 1.0);
    }
}

#[test]
fn a_link_faster_than_the_top_rung_never_stalls() {
    let manifest = build_manifest(builtin_profile("fullhd").unwrap()).unwrap();
    let traj = Trajectory::constant(20_000.0, 10.0);
    for abr in ["throughput", "buffer", "hybrid"] {
        let config = PlayerConfig::default().with_abr(AbrSpec::named(abr));
        let log = run_playback(&manifest, &mut VirtualLink::new(traj.clone()), &config, 0, &AbrRegistry::with_builtins()).unwrap();
        assert_eq!(stall_stats(&log).0, 0, "{abr}");
    }
}

#[test]
fn throughput_rule_settles_on_the_highest_rung_that_fits() {
    let manifest = build_manifest(builtin_profile("fullhd").unwrap()).unwrap();
    // 0.9 × video goodput while 128 kbps audio shares 2000 kbps sits between 1200 and 2400
    let log = run_playback(
        &manifest,
        &mut VirtualLink::new(Trajectory::constant(2000.0, 0.0)),
        &PlayerConfig::default(),
        0,
        &AbrRegistry::with_builtins(),
    )
    .unwrap();
    let reps: Vec<usize> = log.video_segments().iter().map(|s| s.0).collect();
    assert!(reps[10..].iter().all(|&r| r == 2), "{reps:?}");
}
