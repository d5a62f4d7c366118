use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PlayerConfig;
use crate::media::Track;

pub const EVENTLOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Play,
    StartupComplete,
    SegmentRequested {
        track: Track,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rep_id: Option<usize>,
    },
    SegmentCompleted {
        track: Track,
        index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rep_id: Option<usize>,
        bitrate_kbps: u32,
        bytes: u64,
        download_s: f64,
    },
    QualitySwitch {
        from_rep: usize,
        to_rep: usize,
    },
    StallStart,
    StallEnd,
    BufferSample {
        level_s: f64,
    },
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl PlaybackEvent {
    /// `(rep_id, bitrate_kbps)` when this is a completed video segment.
    pub fn video_completion(&self) -> Option<(usize, u32)> {
        match self.kind {
            EventKind::SegmentCompleted {
                track: Track::Video,
                rep_id: Some(rep),
                bitrate_kbps,
                ..
            } => Some((rep, bitrate_kbps)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogHeader {
    pub eventlog_version: u32,
    pub config: PlayerConfig,
    pub profile: String,
    pub ladder_kbps: Vec<u32>,
    pub segment_count: usize,
    pub media_duration_s: f64,
    pub trajectory: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Complete record of one playback run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub header: EventLogHeader,
    pub events: Vec<PlaybackEvent>,
}

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("event log line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("event log is empty")]
    Empty,
    #[error("event log version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EventLog {
    pub fn is_failed(&self) -> bool {
        self.header.failure.is_some()
    }

    pub fn end_time(&self) -> Option<f64> {
        self.events
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::End)
            .map(|e| e.t)
    }

    /// Completed video segments in download order: `(rep_id, bitrate_kbps)`.
    pub fn video_segments(&self) -> Vec<(usize, u32)> {
        self.events.iter().filter_map(PlaybackEvent::video_completion).collect()
    }

    /// Header line followed by one event per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for event in &self.events {
            serde_json::to_writer(&mut out, event)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, EventLogError> {
        let mut lines = input.lines().enumerate();
        let header: EventLogHeader = loop {
            match lines.next() {
                None => return Err(EventLogError::Empty),
                Some((_, line)) if line.as_ref().is_ok_and(|l| l.trim().is_empty()) => continue,
                Some((n, line)) => {
                    break serde_json::from_str(&line?).map_err(|source| {
                        EventLogError::Parse { line: n + 1, source }
                    })?
                }
            }
        };
        if header.eventlog_version != EVENTLOG_VERSION {
            return Err(EventLogError::UnsupportedVersion(header.eventlog_version));
        }
        let mut events = Vec::new();
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(
                serde_json::from_str(&line)
                    .map_err(|source| EventLogError::Parse { line: n + 1, source })?,
            );
        }
        Ok(Self { header, events })
    }
}
