//! Content side of the testbed: bitrate ladders, segment geometry and the
//! manifest a player consumes.
//!
//! Segments are synthetic. Their size follows the nominal bitrate and their
//! bytes come from a keyed pseudo-random stream, so any segment can be
//! regenerated byte-for-byte from `(profile name, track, rep id, index)`.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_SEGMENT_DURATION_S: f64 = 4.0;
pub const DEFAULT_AUDIO_BITRATE_KBPS: u32 = 128;
pub const DEFAULT_TOTAL_DURATION_S: f64 = 630.0;

pub const VIDEO_URL_TEMPLATE: &str = "/video/{rep_id}/{index}";
pub const AUDIO_URL_TEMPLATE: &str = "/audio/{index}";

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("unknown profile `{0}` (expected one of: fullhd, amazon)")]
    UnknownProfile(String),
    #[error("invalid profile: {0}")]
    Invalid(String),
    #[error("segment duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("manifest parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("manifest version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("reading manifest: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Representation {
    pub id: usize,
    pub bitrate_kbps: u32,
    pub width: u32,
    pub height: u32,
}

impl Representation {
    pub fn segment_size_bytes(&self, duration_s: f64) -> Result<u64, MediaError> {
        segment_size_bytes(self.bitrate_kbps, duration_s)
    }
}

/// Uniform `±pct` size jitter applied per segment, keyed by `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeJitter {
    pub pct: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentProfile {
    pub name: String,
    pub representations: Vec<Representation>,
    pub segment_duration_s: f64,
    pub total_duration_s: f64,
    pub audio_bitrate_kbps: u32,
    pub include_audio: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_jitter: Option<SizeJitter>,
}

const FULLHD_LADDER: [(u32, u32, u32); 5] = [
    (426, 238, 400),
    (640, 360, 800),
    (854, 480, 1200),
    (1280, 720, 2400),
    (1920, 1080, 4800),
];

// 2995 and 3000 kbps are both real rungs of this ladder.
const AMAZON_LADDER: [(u32, u32, u32); 15] = [
    (400, 224, 100),
    (400, 224, 150),
    (512, 288, 200),
    (512, 288, 300),
    (512, 288, 500),
    (640, 360, 800),
    (704, 396, 1200),
    (704, 396, 1800),
    (720, 404, 2400),
    (720, 404, 2500),
    (960, 540, 2995),
    (1280, 720, 3000),
    (1280, 720, 4500),
    (1920, 1080, 8000),
    (1920, 1080, 15000),
];

pub const BUILTIN_PROFILES: [&str; 2] = ["fullhd", "amazon"];

/// Returns one of the built-in ladders (`fullhd` or `amazon`) with 4 s
/// segments, 128 kbps audio and a 630 s content length.
pub fn builtin_profile(name: &str) -> Result<ContentProfile, MediaError> {
    let ladder: &[(u32, u32, u32)] = match name {
        "fullhd" => &FULLHD_LADDER,
        "amazon" => &AMAZON_LADDER,
        other => return Err(MediaError::UnknownProfile(other.to_string())),
    };
    let representations = ladder
        .iter()
        .enumerate()
        .map(|(id, &(width, height, bitrate_kbps))| Representation {
            id,
            bitrate_kbps,
            width,
            height,
        })
        .collect();
    Ok(ContentProfile {
        name: name.to_string(),
        representations,
        segment_duration_s: DEFAULT_SEGMENT_DURATION_S,
        total_duration_s: DEFAULT_TOTAL_DURATION_S,
        audio_bitrate_kbps: DEFAULT_AUDIO_BITRATE_KBPS,
        include_audio: true,
        size_jitter: None,
    })
}

/// Nominal size of a segment: `bitrate × 1000 × duration / 8`, rounded.
pub fn segment_size_bytes(bitrate_kbps: u32, duration_s: f64) -> Result<u64, MediaError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(MediaError::NonPositiveDuration(duration_s));
    }
    Ok((f64::from(bitrate_kbps) * 1000.0 * duration_s / 8.0).round() as u64)
}

impl ContentProfile {
    pub fn validate(&self) -> Result<(), MediaError> {
        let bad = |msg: String| Err(MediaError::Invalid(msg));
        if self.name.is_empty() {
            return bad("name must not be empty".into());
        }
        if self.representations.is_empty() {
            return bad("at least one representation is required".into());
        }
        if !(self.segment_duration_s > 0.0) || !self.segment_duration_s.is_finite() {
            return bad(format!(
                "segment_duration_s must be > 0 (got {})",
                self.segment_duration_s
            ));
        }
        if !(self.total_duration_s > 0.0) || !self.total_duration_s.is_finite() {
            return bad(format!(
                "total_duration_s must be > 0 (got {})",
                self.total_duration_s
            ));
        }
        if self.include_audio && self.audio_bitrate_kbps == 0 {
            return bad("audio_bitrate_kbps must be > 0 when audio is included".into());
        }
        for (pos, rep) in self.representations.iter().enumerate() {
            if rep.id != pos {
                return bad(format!(
                    "representation ids must be contiguous from 0 (position {pos} has id {})",
                    rep.id
                ));
            }
            if rep.bitrate_kbps == 0 {
                return bad(format!("representation {pos}: bitrate_kbps must be > 0"));
            }
            if rep.width == 0 || rep.height == 0 {
                return bad(format!("representation {pos}: width and height must be > 0"));
            }
            if pos > 0 && rep.bitrate_kbps <= self.representations[pos - 1].bitrate_kbps {
                return bad(format!(
                    "representation {pos}: bitrate must strictly increase with id"
                ));
            }
        }
        if let Some(j) = self.size_jitter {
            if !(0.0..100.0).contains(&j.pct) {
                return bad(format!("size_jitter.pct must be in [0, 100) (got {})", j.pct));
            }
        }
        Ok(())
    }

    pub fn segment_count(&self) -> usize {
        (self.total_duration_s / self.segment_duration_s).ceil() as usize
    }

    /// Media duration of segment `index`; the final segment may be shorter.
    pub fn segment_duration(&self, index: usize) -> f64 {
        let start = index as f64 * self.segment_duration_s;
        (self.total_duration_s - start).min(self.segment_duration_s)
    }

    pub fn top_bitrate_kbps(&self) -> u32 {
        self.representations.last().map_or(0, |r| r.bitrate_kbps)
    }

    pub fn lowest_bitrate_kbps(&self) -> u32 {
        self.representations.first().map_or(0, |r| r.bitrate_kbps)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrlTemplate {
    pub video: String,
    pub audio: String,
}

impl Default for UrlTemplate {
    fn default() -> Self {
        Self {
            video: VIDEO_URL_TEMPLATE.to_string(),
            audio: AUDIO_URL_TEMPLATE.to_string(),
        }
    }
}

impl UrlTemplate {
    pub fn video_path(&self, rep_id: usize, index: usize) -> String {
        self.video
            .replace("{rep_id}", &rep_id.to_string())
            .replace("{index}", &index.to_string())
    }

    pub fn audio_path(&self, index: usize) -> String {
        self.audio.replace("{index}", &index.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    Video,
    Audio,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub profile: ContentProfile,
    pub segment_count: usize,
    pub url_template: UrlTemplate,
}

pub fn build_manifest(profile: ContentProfile) -> Result<Manifest, MediaError> {
    profile.validate()?;
    Ok(Manifest {
        segment_count: profile.segment_count(),
        profile,
        url_template: UrlTemplate::default(),
    })
}

impl Manifest {
    pub fn ladder(&self) -> &[Representation] {
        &self.profile.representations
    }

    pub fn segment_duration(&self, index: usize) -> f64 {
        self.profile.segment_duration(index)
    }

    /// Body length of video segment `(rep_id, index)`, or `None` when out of range.
    pub fn video_segment_bytes(&self, rep_id: usize, index: usize) -> Option<u64> {
        self.video_segment_bytes_salted(rep_id, index, 0)
    }

    /// As [`video_segment_bytes`](Self::video_segment_bytes), with the size
    /// jitter (if enabled) additionally keyed by `salt`.
    pub fn video_segment_bytes_salted(&self, rep_id: usize, index: usize, salt: u64) -> Option<u64> {
        let rep = self.profile.representations.get(rep_id)?;
        if index >= self.segment_count {
            return None;
        }
        let nominal = segment_size_bytes(rep.bitrate_kbps, self.segment_duration(index)).ok()?;
        Some(self.apply_jitter(nominal, Track::Video, rep_id, index, salt))
    }

    pub fn audio_segment_bytes(&self, index: usize) -> Option<u64> {
        self.audio_segment_bytes_salted(index, 0)
    }

    pub fn audio_segment_bytes_salted(&self, index: usize, salt: u64) -> Option<u64> {
        if !self.profile.include_audio || index >= self.segment_count {
            return None;
        }
        let nominal =
            segment_size_bytes(self.profile.audio_bitrate_kbps, self.segment_duration(index))
                .ok()?;
        Some(self.apply_jitter(nominal, Track::Audio, 0, index, salt))
    }

    fn apply_jitter(&self, nominal: u64, track: Track, rep_id: usize, index: usize, salt: u64) -> u64 {
        let Some(jitter) = self.profile.size_jitter else {
            return nominal;
        };
        if jitter.pct == 0.0 {
            return nominal;
        }
        let mut key = segment_key(&self.profile.name, track, rep_id, index);
        for (k, s) in key.iter_mut().zip((jitter.seed ^ salt).to_le_bytes()) {
            *k ^= s;
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        let factor = 1.0 + rng.random_range(-jitter.pct..=jitter.pct) / 100.0;
        ((nominal as f64) * factor).round().max(1.0) as u64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ManifestDoc::from(self)).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MediaError> {
        let doc: ManifestDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn load(path: &Path) -> Result<Self, MediaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AudioDoc {
    bitrate_kbps: u32,
}

/// Wire form of the manifest (`manifest_version: 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestDoc {
    manifest_version: u32,
    name: String,
    segment_duration_s: f64,
    total_duration_s: f64,
    audio: Option<AudioDoc>,
    representations: Vec<Representation>,
    segment_count: usize,
    segment_durations_s: Vec<f64>,
    url_template: UrlTemplate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size_jitter: Option<SizeJitter>,
}

impl From<&Manifest> for ManifestDoc {
    fn from(m: &Manifest) -> Self {
        let p = &m.profile;
        ManifestDoc {
            manifest_version: MANIFEST_VERSION,
            name: p.name.clone(),
            segment_duration_s: p.segment_duration_s,
            total_duration_s: p.total_duration_s,
            audio: p.include_audio.then_some(AudioDoc {
                bitrate_kbps: p.audio_bitrate_kbps,
            }),
            representations: p.representations.clone(),
            segment_count: m.segment_count,
            segment_durations_s: (0..m.segment_count).map(|i| p.segment_duration(i)).collect(),
            url_template: m.url_template.clone(),
            size_jitter: p.size_jitter,
        }
    }
}

impl TryFrom<ManifestDoc> for Manifest {
    type Error = MediaError;

    fn try_from(doc: ManifestDoc) -> Result<Self, MediaError> {
        if doc.manifest_version != MANIFEST_VERSION {
            return Err(MediaError::UnsupportedVersion(doc.manifest_version));
        }
        let profile = ContentProfile {
            name: doc.name,
            representations: doc.representations,
            segment_duration_s: doc.segment_duration_s,
            total_duration_s: doc.total_duration_s,
            audio_bitrate_kbps: doc
                .audio
                .as_ref()
                .map_or(DEFAULT_AUDIO_BITRATE_KBPS, |a| a.bitrate_kbps),
            include_audio: doc.audio.is_some(),
            size_jitter: doc.size_jitter,
        };
        let mut manifest = build_manifest(profile)?;
        if manifest.segment_count != doc.segment_count {
            return Err(MediaError::Invalid(format!(
                "segment_count {} does not match ceil(total/segment) = {}",
                doc.segment_count, manifest.segment_count
            )));
        }
        manifest.url_template = doc.url_template;
        Ok(manifest)
    }
}

fn segment_key(profile: &str, track: Track, rep_id: usize, index: usize) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(profile.as_bytes());
    hasher.update([0u8]);
    hasher.update(match track {
        Track::Video => b"video",
        Track::Audio => b"audio",
    });
    hasher.update((rep_id as u64).to_le_bytes());
    hasher.update((index as u64).to_le_bytes());
    hasher.finalize().into()
}

/// Deterministic body of a synthetic segment.
pub fn segment_payload(
    profile: &str,
    track: Track,
    rep_id: usize,
    index: usize,
    len: usize,
) -> Vec<u8> {
    let mut rng = ChaCha8Rng::from_seed(segment_key(profile, track, rep_id, index));
    let mut buf = vec![0u8; len];
    rng.fill_bytes(&mut buf);
    buf
}
