use super::abr::{AbrContext, AbrPolicy, AbrRegistry, ThroughputSample};
use super::events::{EventKind, EventLog, EventLogHeader, PlaybackEvent, EVENTLOG_VERSION};
use super::link::{FetchRequest, SegmentLink};
use super::{PlayerConfig, PlayerError};
use crate::media::{Manifest, Track};

/// Cadence of `BufferSample` events.
pub const SAMPLE_INTERVAL_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Startup,
    Playing,
    Stalled,
    Ended,
}

struct Engine<'a> {
    manifest: &'a Manifest,
    config: &'a PlayerConfig,
    policy: &'a dyn AbrPolicy,
    observer: &'a mut dyn FnMut(&PlaybackEvent),
    seed: u64,
    t: f64,
    buffer: f64,
    state: State,
    next_sample: u64,
    all_downloaded: bool,
    samples: Vec<ThroughputSample>,
    last_rep: Option<usize>,
    events: Vec<PlaybackEvent>,
}

impl Engine<'_> {
    fn emit(&mut self, kind: EventKind) {
        let event = PlaybackEvent { t: self.t, kind };
        (self.observer)(&event);
        self.events.push(event);
    }

    /// Moves the clock to `target`, draining the buffer while playing and
    /// emitting samples, stalls and the end of playback on the way.
    fn advance_to(&mut self, target: f64) {
        while self.state != State::Ended {
            let sample_t = self.next_sample as f64 * SAMPLE_INTERVAL_S;
            let empty_t = if self.state == State::Playing {
                self.t + self.buffer
            } else {
                f64::INFINITY
            };
            let next = target.min(sample_t).min(empty_t);
            if next > self.t {
                if self.state == State::Playing {
                    self.buffer = (self.buffer - (next - self.t)).max(0.0);
                }
                self.t = next;
            }
            if self.state == State::Playing && next >= empty_t {
                self.buffer = 0.0;
                if self.all_downloaded {
                    self.state = State::Ended;
                    self.emit(EventKind::End);
                    return;
                }
                self.state = State::Stalled;
                self.emit(EventKind::StallStart);
            }
            if sample_t <= self.t {
                self.emit(EventKind::BufferSample {
                    level_s: self.buffer,
                });
                self.next_sample += 1;
                continue;
            }
            if self.t >= target {
                break;
            }
        }
    }

    fn run(mut self, link: &mut dyn SegmentLink) -> (Vec<PlaybackEvent>, Option<String>) {
        link.begin();
        self.emit(EventKind::Play);
        let ladder = self.manifest.ladder();
        let segments = self.manifest.segment_count;
        let fetch_audio = self.config.fetch_audio && self.manifest.profile.include_audio;

        for index in 0..segments {
            let media = self.manifest.segment_duration(index);
            if self.state == State::Playing
                && self.buffer + media > self.config.buffer_capacity_s
            {
                let resume = self.t + (self.buffer + media - self.config.buffer_capacity_s);
                link.wait_until(resume);
                self.advance_to(resume);
            }

            let ctx = AbrContext {
                buffer_level_s: self.buffer,
                buffer_capacity_s: self.config.buffer_capacity_s,
                throughput_samples: &self.samples,
                last_rep_id: self.last_rep,
                segment_index: index,
                ladder,
            };
            let rep = self
                .policy
                .choose(&ctx, &self.config.abr.params)
                .min(ladder.len() - 1);

            let request = FetchRequest {
                path: self.manifest.url_template.video_path(rep, index),
                expected_bytes: self
                    .manifest
                    .video_segment_bytes_salted(rep, index, self.seed)
                    .expect("rep and index are in range"),
            };
            let requested_at = self.t;
            self.emit(EventKind::SegmentRequested {
                track: Track::Video,
                index,
                rep_id: Some(rep),
            });
            let outcome = match link.fetch(&request, requested_at) {
                Ok(o) => o,
                Err(e) => return (self.events, Some(e.to_string())),
            };
            self.advance_to(outcome.finish.max(requested_at));
            let download_s = self.t - requested_at;
            let video_bytes = outcome.bytes;
            self.emit(EventKind::SegmentCompleted {
                track: Track::Video,
                index,
                rep_id: Some(rep),
                bitrate_kbps: ladder[rep].bitrate_kbps,
                bytes: outcome.bytes,
                download_s,
            });
            if let Some(prev) = self.last_rep.filter(|&p| p != rep) {
                self.emit(EventKind::QualitySwitch {
                    from_rep: prev,
                    to_rep: rep,
                });
            }
            self.last_rep = Some(rep);

            if fetch_audio {
                let request = FetchRequest {
                    path: self.manifest.url_template.audio_path(index),
                    expected_bytes: self
                        .manifest
                        .audio_segment_bytes_salted(index, self.seed)
                        .expect("audio index is in range"),
                };
                let requested_at = self.t;
                self.emit(EventKind::SegmentRequested {
                    track: Track::Audio,
                    index,
                    rep_id: None,
                });
                let outcome = match link.fetch(&request, requested_at) {
                    Ok(o) => o,
                    Err(e) => return (self.events, Some(e.to_string())),
                };
                self.advance_to(outcome.finish.max(requested_at));
                self.emit(EventKind::SegmentCompleted {
                    track: Track::Audio,
                    index,
                    rep_id: None,
                    bitrate_kbps: self.manifest.profile.audio_bitrate_kbps,
                    bytes: outcome.bytes,
                    download_s: self.t - requested_at,
                });
            }

            // video goodput over the whole paired fetch, so the estimate
            // leaves room for the audio sharing the link
            let cycle_s = self.t - requested_at;
            if cycle_s > 0.0 {
                self.samples.push(ThroughputSample {
                    bytes: video_bytes,
                    download_s: cycle_s,
                });
            }

            // the segment becomes playable once all of its tracks are in
            self.buffer += media;
            self.all_downloaded = index + 1 == segments;
            match self.state {
                State::Startup
                    if self.buffer >= self.config.startup_threshold_s || self.all_downloaded =>
                {
                    self.state = State::Playing;
                    self.emit(EventKind::StartupComplete);
                }
                State::Stalled
                    if self.buffer >= self.config.rebuffer_threshold_s || self.all_downloaded =>
                {
                    self.state = State::Playing;
                    self.emit(EventKind::StallEnd);
                }
                _ => {}
            }
        }

        self.advance_to(f64::INFINITY);
        (self.events, None)
    }
}

/// Runs one playback session with the policy named in `config.abr`.
pub fn run_playback(
    manifest: &Manifest,
    link: &mut dyn SegmentLink,
    config: &PlayerConfig,
    seed: u64,
    registry: &AbrRegistry,
) -> Result<EventLog, PlayerError> {
    run_playback_observed(manifest, link, config, seed, registry, &mut |_| {})
}

/// Like [`run_playback`], handing every event to `observer` as it is emitted.
pub fn run_playback_observed(
    manifest: &Manifest,
    link: &mut dyn SegmentLink,
    config: &PlayerConfig,
    seed: u64,
    registry: &AbrRegistry,
    observer: &mut dyn FnMut(&PlaybackEvent),
) -> Result<EventLog, PlayerError> {
    config.validate()?;
    if config.buffer_capacity_s < manifest.profile.segment_duration_s {
        return Err(PlayerError::InvalidConfig(format!(
            "buffer_capacity_s ({}) must hold at least one segment ({} s)",
            config.buffer_capacity_s, manifest.profile.segment_duration_s
        )));
    }
    let policy = registry.get(&config.abr.name)?;
    let engine = Engine {
        manifest,
        config,
        policy: policy.as_ref(),
        observer,
        seed,
        t: 0.0,
        buffer: 0.0,
        state: State::Startup,
        next_sample: 0,
        all_downloaded: false,
        samples: Vec::new(),
        last_rep: None,
        events: Vec::new(),
    };
    let (events, failure) = engine.run(link);
    Ok(EventLog {
        header: EventLogHeader {
            eventlog_version: EVENTLOG_VERSION,
            config: config.clone(),
            profile: manifest.profile.name.clone(),
            ladder_kbps: manifest.ladder().iter().map(|r| r.bitrate_kbps).collect(),
            segment_count: manifest.segment_count,
            media_duration_s: manifest.profile.total_duration_s,
            trajectory: link.describe(),
            seed,
            failure,
        },
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::Trajectory;
    use crate::media::{build_manifest, ContentProfile, Representation};
    use crate::player::{AbrParams, AbrSpec, VirtualLink};

    fn single_rep(segments: usize) -> Manifest {
        build_manifest(ContentProfile {
            name: "single".into(),
            representations: vec![Representation {
                id: 0,
                bitrate_kbps: 400,
                width: 426,
                height: 238,
            }],
            segment_duration_s: 4.0,
            total_duration_s: 4.0 * segments as f64,
            audio_bitrate_kbps: 128,
            include_audio: false,
            size_jitter: None,
        })
        .unwrap()
    }

    fn kinds(log: &EventLog) -> Vec<&EventKind> {
        log.events.iter().map(|e| &e.kind).collect()
    }

    #[test]
    fn startup_example() {
        let m = single_rep(5);
        let mut link = VirtualLink::new(Trajectory::constant(1000.0, 0.0));
        let cfg = PlayerConfig::default();
        let log = run_playback(&m, &mut link, &cfg, 1, &AbrRegistry::with_builtins()).unwrap();
        let startup = log
            .events
            .iter()
            .find(|e| e.kind == EventKind::StartupComplete)
            .unwrap();
        assert!((startup.t - 1.6).abs() < 1e-12);
        assert!(!kinds(&log).contains(&&EventKind::StallStart));
        assert!(!log
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::QualitySwitch { .. })));
        // 1.6 s startup + 20 s media, no stalls
        assert!((log.end_time().unwrap() - 21.6).abs() < 1e-9);
        assert_eq!(log.events.first().unwrap().kind, EventKind::Play);
        assert_eq!(log.events.last().unwrap().kind, EventKind::End);
    }

    #[test]
    fn slow_link_stalls() {
        let m = single_rep(5);
        let mut link = VirtualLink::new(Trajectory::constant(300.0, 0.0));
        let log = run_playback(
            &m,
            &mut link,
            &PlayerConfig::default(),
            0,
            &AbrRegistry::with_builtins(),
        )
        .unwrap();
        assert!(kinds(&log).contains(&&EventKind::StallStart));
    }

    #[test]
    fn constant_policy_never_switches() {
        let mut registry = AbrRegistry::with_builtins();
        registry
            .register("constant-lowest", |_: &AbrContext<'_>, _: &AbrParams| 0usize)
            .unwrap();
        let m = build_manifest(crate::media::builtin_profile("amazon").unwrap()).unwrap();
        let mut link = VirtualLink::new(Trajectory::paper_fig4());
        let cfg = PlayerConfig::default().with_abr(AbrSpec::named("constant-lowest"));
        let log = run_playback(&m, &mut link, &cfg, 0, &registry).unwrap();
        assert!(log.video_segments().iter().all(|&(rep, _)| rep == 0));
        assert!(!log
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::QualitySwitch { .. })));
    }

    #[test]
    fn buffer_respects_capacity() {
        let m = build_manifest(crate::media::builtin_profile("fullhd").unwrap()).unwrap();
        let mut link = VirtualLink::new(Trajectory::constant(50_000.0, 0.0));
        let log = run_playback(
            &m,
            &mut link,
            &PlayerConfig::default(),
            0,
            &AbrRegistry::with_builtins(),
        )
        .unwrap();
        for e in &log.events {
            if let EventKind::BufferSample { level_s } = e.kind {
                assert!((0.0..=34.0 + 1e-9).contains(&level_s), "{level_s}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let m = single_rep(2);
        let mut link = VirtualLink::new(Trajectory::constant(1000.0, 0.0));
        let reg = AbrRegistry::with_builtins();
        let mut cfg = PlayerConfig::default();
        cfg.startup_threshold_s = 40.0;
        assert!(run_playback(&m, &mut link, &cfg, 0, &reg).is_err());
        let mut cfg = PlayerConfig::default();
        cfg.buffer_capacity_s = 2.0;
        cfg.startup_threshold_s = 1.0;
        cfg.rebuffer_threshold_s = 1.0;
        assert!(run_playback(&m, &mut link, &cfg, 0, &reg).is_err());
        let cfg = PlayerConfig::default().with_abr(AbrSpec::named("missing"));
        assert!(matches!(
            run_playback(&m, &mut link, &cfg, 0, &reg),
            Err(PlayerError::Abr(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let m = build_manifest(crate::media::builtin_profile("fullhd").unwrap()).unwrap();
        let mut link = VirtualLink::new(Trajectory::paper_fig4());
        let log = run_playback(
            &m,
            &mut link,
            &PlayerConfig::default(),
            3,
            &AbrRegistry::with_builtins(),
        )
        .unwrap();
        let text = log.to_jsonl();
        let first: serde_json::Value =
            serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["eventlog_version"], 1);
        assert_eq!(first["seed"], 3);
        let back = EventLog::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }
}
