use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::link::{Trajectory, PAPER_FIG4_JSON, PAPER_FIG4_NAME};
use crate::media::{build_manifest, builtin_profile, Manifest, BUILTIN_PROFILES};
use crate::player::{AbrRegistry, AbrSpec, PlayerConfig};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Deterministic discrete-event playback.
    #[default]
    Virtual,
    /// Real HTTP through the shaping proxy, in wall-clock time.
    Proxy,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Virtual => "virtual",
            Mode::Proxy => "proxy",
        })
    }
}

/// Buffer and fetch settings; the ABR choice lives on [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayerSettings {
    pub buffer_capacity_s: f64,
    pub startup_threshold_s: f64,
    pub rebuffer_threshold_s: f64,
    pub fetch_audio: bool,
}

impl Default for PlayerSettings {
    fn default() -> Self {
        let d = PlayerConfig::default();
        Self {
            buffer_capacity_s: d.buffer_capacity_s,
            startup_threshold_s: d.startup_threshold_s,
            rebuffer_threshold_s: d.rebuffer_threshold_s,
            fetch_audio: d.fetch_audio,
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_runs() -> u32 {
    5
}

/// One experiment: what to play, over which link, with which policy, how often.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub config_version: u32,
    pub name: String,
    /// Built-in profile name (`fullhd`, `amazon`) or a manifest JSON path.
    pub profile: String,
    /// Overrides the content length of a built-in profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_duration_s: Option<f64>,
    /// `paper_fig4` or a trajectory JSON path.
    pub trajectory: String,
    #[serde(default)]
    pub abr: AbrSpec,
    #[serde(default)]
    pub player: PlayerSettings,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed_base: u64,
}

impl ExperimentConfig {
    pub fn new(name: impl Into<String>, profile: &str, trajectory: &str, abr: &str) -> Self {
        Self {
            config_version: CONFIG_VERSION,
            name: name.into(),
            profile: profile.to_string(),
            total_duration_s: None,
            trajectory: trajectory.to_string(),
            abr: AbrSpec::named(abr),
            player: PlayerSettings::default(),
            runs: default_runs(),
            mode: Mode::Virtual,
            seed_base: 0,
        }
    }

    pub fn player_config(&self) -> PlayerConfig {
        PlayerConfig {
            buffer_capacity_s: self.player.buffer_capacity_s,
            startup_threshold_s: self.player.startup_threshold_s,
            rebuffer_threshold_s: self.player.rebuffer_threshold_s,
            abr: self.abr.clone(),
            fetch_audio: self.player.fetch_audio,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..u64::from(self.runs)).map(|i| self.seed_base.wrapping_add(i))
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            ConfigError::single("$", format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("$", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub errors: Vec<FieldError>,
}

impl ConfigError {
    pub fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            errors: vec![FieldError {
                field: field.into(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid experiment config:")?;
        for e in &self.errors {
            write!(f, " {}: {};", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A config with its profile, trajectory and policy resolved.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub manifest: Manifest,
    pub trajectory: Trajectory,
    pub player: PlayerConfig,
}

/// Turns the names in a config into concrete inputs. Relative paths are
/// tried against `base_dir`, then against each trajectory directory.
#[derive(Debug, Clone)]
pub struct Resolver {
    pub base_dir: PathBuf,
    pub trajectory_dirs: Vec<PathBuf>,
}

impl Default for Resolver {
    fn default() -> Self {
        Self::new(".")
    }
}

impl Resolver {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        let base_dir = base_dir.into();
        Self {
            trajectory_dirs: vec![base_dir.join("trajectories")],
            base_dir,
        }
    }

    pub fn with_trajectory_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.trajectory_dirs.push(dir.into());
        self
    }

    fn find(&self, reference: &str, dirs: &[PathBuf]) -> Option<PathBuf> {
        let direct = Path::new(reference);
        if direct.is_absolute() {
            return direct.is_file().then(|| direct.to_path_buf());
        }
        std::iter::once(self.base_dir.join(direct))
            .chain(dirs.iter().flat_map(|d| {
                [d.join(reference), d.join(format!("{reference}.json"))]
            }))
            .find(|p| p.is_file())
    }

    pub fn trajectory(&self, reference: &str) -> Result<Trajectory, String> {
        if reference == PAPER_FIG4_NAME {
            return crate::link::load_trajectory(PAPER_FIG4_JSON, PAPER_FIG4_NAME)
                .map_err(|e| e.to_string());
        }
        let path = self
            .find(reference, &self.trajectory_dirs)
            .ok_or_else(|| format!("trajectory `{reference}` not found"))?;
        Trajectory::load(&path).map_err(|e| e.to_string())
    }

    pub fn manifest(&self, reference: &str, total_duration_s: Option<f64>) -> Result<Manifest, String> {
        if BUILTIN_PROFILES.contains(&reference) {
            let mut profile = builtin_profile(reference).map_err(|e| e.to_string())?;
            if let Some(total) = total_duration_s {
                profile.total_duration_s = total;
            }
            return build_manifest(profile).map_err(|e| e.to_string());
        }
        if total_duration_s.is_some() {
            return Err("total_duration_s only applies to built-in profiles".into());
        }
        let path = self
            .find(reference, &[])
            .ok_or_else(|| format!("unknown profile `{reference}` (not built in, no such manifest file)"))?;
        Manifest::load(&path).map_err(|e| e.to_string())
    }

    /// Names of every trajectory this resolver can see.
    pub fn trajectory_names(&self) -> Vec<String> {
        let mut names = vec![PAPER_FIG4_NAME.to_string()];
        for dir in &self.trajectory_dirs {
            let Ok(entries) = std::fs::read_dir(dir) else { continue };
            let mut found: Vec<String> = entries
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .collect();
            found.sort();
            for n in found {
                if !names.contains(&n) {
                    names.push(n);
                }
            }
        }
        names
    }

    /// Validates every field and collects all problems before failing.
    pub fn resolve(
        &self,
        config: &ExperimentConfig,
        registry: &AbrRegistry,
    ) -> Result<ResolvedExperiment, ConfigError> {
        let mut errors = Vec::new();
        let mut err = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.to_string(),
                message,
            })
        };
        if config.config_version != CONFIG_VERSION {
            err(
                "config_version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", config.config_version),
            );
        }
        if config.name.trim().is_empty() {
            err("name", "must not be empty".into());
        }
        if config.runs < 1 {
            err("runs", "must be at least 1".into());
        }
        if !registry.contains(&config.abr.name) {
            let known: Vec<&str> = registry.names().collect();
            err(
                "abr.name",
                format!("unknown policy `{}` (known: {})", config.abr.name, known.join(", ")),
            );
        }
        let player = config.player_config();
        if let Err(e) = player.validate() {
            err("player", e.to_string());
        }
        let manifest = self
            .manifest(&config.profile, config.total_duration_s)
            .map_err(|m| err("profile", m))
            .ok();
        let trajectory = self
            .trajectory(&config.trajectory)
            .map_err(|m| err("trajectory", m))
            .ok();
        if let Some(m) = &manifest {
            if player.buffer_capacity_s < m.profile.segment_duration_s {
                err(
                    "player.buffer_capacity_s",
                    format!("must hold at least one {} s segment", m.profile.segment_duration_s),
                );
            }
        }
        match (manifest, trajectory) {
            (Some(manifest), Some(trajectory)) if errors.is_empty() => Ok(ResolvedExperiment {
                config: config.clone(),
                manifest,
                trajectory,
                player,
            }),
            _ => Err(ConfigError { errors }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_json() {
        let c = ExperimentConfig::from_json(
            r#"{"name":"x","profile":"fullhd","trajectory":"paper_fig4"}"#,
        )
        .unwrap();
        assert_eq!(c.runs, 5);
        assert_eq!(c.mode, Mode::Virtual);
        assert_eq!(c.abr.name, "throughput");
        assert_eq!(c.player.buffer_capacity_s, 30.0);
        assert_eq!(c.seeds().collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
    }

    #[test]
    fn resolve_collects_every_field_error() {
        let mut c = ExperimentConfig::new("", "bogus", "nowhere", "nope");
        c.runs = 0;
        let err = Resolver::new("/nonexistent")
            .resolve(&c, &AbrRegistry::with_builtins())
            .unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
        for f in ["name", "runs", "abr.name", "profile", "trajectory"] {
            assert!(fields.contains(&f), "{fields:?}");
        }
    }

    #[test]
    fn resolves_builtins() {
        let mut c = ExperimentConfig::new("ok", "amazon", "paper_fig4", "buffer");
        c.total_duration_s = Some(40.0);
        let r = Resolver::default().resolve(&c, &AbrRegistry::with_builtins()).unwrap();
        assert_eq!(r.manifest.segment_count, 10);
        assert_eq!(r.trajectory.stages().len(), 11);
        assert_eq!(r.player.abr.name, "buffer");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(
            r#"{"name":"x","profile":"fullhd","trajectory":"paper_fig4","rnus":3}"#
        )
        .is_err());
    }
}
