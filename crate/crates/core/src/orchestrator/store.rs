use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ExperimentConfig, Mode};
use crate::link::Trajectory;
use crate::media::Manifest;
use crate::metrics::{AggregateReport, MetricsReport, ScalarMetrics};
use crate::player::EventLog;

pub const STORE_ENV: &str = "ABRBENCH_STORE";
pub const DEFAULT_STORE_DIR: &str = "results";
const INDEX_FILE: &str = "index.jsonl";
const EXPERIMENTS_DIR: &str = "experiments";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Index entry for one run. Paths are relative to the store root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment_id: String,
    pub experiment: String,
    pub run_index: u32,
    pub seed: u64,
    pub abr: String,
    pub profile: String,
    pub trajectory: String,
    pub mode: Mode,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub log_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scalars: Option<ScalarMetrics>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// Everything about one run except where it will be written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_index: u32,
    pub seed: u64,
    pub log: EventLog,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

/// Append-only directory of experiments.
///
/// ```text
/// <root>/index.jsonl
/// <root>/experiments/<id>/config.json
/// <root>/experiments/<id>/manifest.json
/// <root>/experiments/<id>/trajectory.json
/// <root>/experiments/<id>/runs/<i>.events.jsonl
/// <root>/experiments/<id>/runs/<i>.report.json
/// <root>/experiments/<id>/runs/<i>.record.json
/// <root>/experiments/<id>/aggregate.json
/// ```
#[derive(Debug)]
pub struct ResultsStore {
    root: PathBuf,
    index: Vec<RunRecord>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), StoreError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("store documents serialize");
    out.push(b'\n');
    out
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if s.is_empty() { "experiment".into() } else { s }
}

impl ResultsStore {
    /// Opens (creating if needed) the store at `root` and loads its index.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let experiments = root.join(EXPERIMENTS_DIR);
        fs::create_dir_all(&experiments).map_err(io_err(&experiments))?;
        let index_path = root.join(INDEX_FILE);
        let mut index = Vec::new();
        if index_path.exists() {
            let file = File::open(&index_path).map_err(io_err(&index_path))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&index_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: index_path.clone(),
                    message: format!("line {}: {e}", n + 1),
                })?;
                index.push(record);
            }
        }
        Ok(Self { root, index })
    }

    /// Opens the store named by `ABRBENCH_STORE`, or `./results`.
    pub fn open_default() -> Result<Self, StoreError> {
        Self::open(std::env::var_os(STORE_ENV).map_or_else(|| PathBuf::from(DEFAULT_STORE_DIR), PathBuf::from))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Run records in the order they were written.
    pub fn records(&self) -> &[RunRecord] {
        &self.index
    }

    pub fn experiment_dir(&self, id: &str) -> PathBuf {
        self.root.join(EXPERIMENTS_DIR).join(id)
    }

    /// Experiment ids in creation order.
    pub fn experiment_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(EXPERIMENTS_DIR);
        let mut ids: Vec<String> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(Result::ok)
            .filter(|e| e.path().is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// Allocates a fresh experiment directory and writes its inputs.
    /// Ids are `NNNN-<name>` so lexical order is creation order.
    pub fn create_experiment(
        &mut self,
        config: &ExperimentConfig,
        manifest: &Manifest,
        trajectory: &Trajectory,
    ) -> Result<String, StoreError> {
        let base = self.root.join(EXPERIMENTS_DIR);
        let mut seq = self
            .experiment_ids()?
            .iter()
            .filter_map(|id| id.split('-').next()?.parse::<u32>().ok())
            .max()
            .unwrap_or(0);
        let (id, dir) = loop {
            seq += 1;
            let id = format!("{seq:04}-{}", slug(&config.name));
            let dir = base.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io_err(&dir)(e)),
            }
        };
        let runs = dir.join("runs");
        fs::create_dir(&runs).map_err(io_err(&runs))?;
        write_file(&dir.join("config.json"), &to_pretty(config))?;
        write_file(&dir.join("manifest.json"), manifest.to_json().as_bytes())?;
        write_file(&dir.join("trajectory.json"), trajectory.to_json().as_bytes())?;
        Ok(id)
    }

    /// Writes one run's artifacts, then appends its record to the index.
    pub fn write_run(
        &mut self,
        experiment_id: &str,
        config: &ExperimentConfig,
        outcome: &RunOutcome,
    ) -> Result<RunRecord, StoreError> {
        let dir = self.experiment_dir(experiment_id);
        if !dir.is_dir() {
            return Err(StoreError::UnknownExperiment(experiment_id.to_string()));
        }
        let rel = |file: String| format!("{EXPERIMENTS_DIR}/{experiment_id}/runs/{file}");
        let i = outcome.run_index;
        let log_path = rel(format!("{i}.events.jsonl"));
        let abs = self.root.join(&log_path);
        let file = File::create(&abs).map_err(io_err(&abs))?;
        let mut out = BufWriter::new(file);
        outcome.log.write_jsonl(&mut out).map_err(io_err(&abs))?;
        out.flush().map_err(io_err(&abs))?;

        let report_path = match &outcome.report {
            Some(report) => {
                let p = rel(format!("{i}.report.json"));
                write_file(&self.root.join(&p), &to_pretty(report))?;
                Some(p)
            }
            None => None,
        };
        let record = RunRecord {
            experiment_id: experiment_id.to_string(),
            experiment: config.name.clone(),
            run_index: i,
            seed: outcome.seed,
            abr: config.abr.name.clone(),
            profile: outcome.log.header.profile.clone(),
            trajectory: outcome.log.header.trajectory.clone(),
            mode: config.mode,
            status: if outcome.report.is_some() && outcome.error.is_none() {
                RunStatus::Ok
            } else {
                RunStatus::Failed
            },
            error: outcome.error.clone(),
            log_path,
            report_path,
            scalars: outcome.report.as_ref().map(|r| r.scalars),
            started_at: outcome.started_at,
            finished_at: outcome.finished_at,
        };
        write_file(&self.root.join(rel(format!("{i}.record.json"))), &to_pretty(&record))?;
        self.append_index(&record)?;
        self.index.push(record.clone());
        Ok(record)
    }

    fn append_index(&self, record: &RunRecord) -> Result<(), StoreError> {
        let path = self.root.join(INDEX_FILE);
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(io_err(&path))
    }

    pub fn write_aggregate(&self, experiment_id: &str, aggregate: &AggregateReport) -> Result<(), StoreError> {
        write_file(&self.experiment_dir(experiment_id).join("aggregate.json"), &to_pretty(aggregate))
    }

    pub fn load_aggregate(&self, experiment_id: &str) -> Result<Option<AggregateReport>, StoreError> {
        let path = self.experiment_dir(experiment_id).join("aggregate.json");
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn load_config(&self, experiment_id: &str) -> Result<ExperimentConfig, StoreError> {
        let dir = self.experiment_dir(experiment_id);
        if !dir.is_dir() {
            return Err(StoreError::UnknownExperiment(experiment_id.to_string()));
        }
        read_json(&dir.join("config.json"))
    }

    pub fn load_trajectory(&self, experiment_id: &str) -> Result<Trajectory, StoreError> {
        let config = self.load_config(experiment_id)?;
        let name = Path::new(&config.trajectory)
            .file_stem()
            .map_or_else(|| config.trajectory.clone(), |s| s.to_string_lossy().into_owned());
        let path = self.experiment_dir(experiment_id).join("trajectory.json");
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        crate::link::load_trajectory(&text, &name).map_err(|e| StoreError::Corrupt {
            path,
            message: e.to_string(),
        })
    }

    pub fn load_log(&self, record: &RunRecord) -> Result<EventLog, StoreError> {
        let path = self.root.join(&record.log_path);
        let file = File::open(&path).map_err(io_err(&path))?;
        EventLog::read_jsonl(BufReader::new(file)).map_err(|e| StoreError::Corrupt {
            path,
            message: e.to_string(),
        })
    }

    pub fn load_report(&self, record: &RunRecord) -> Result<Option<MetricsReport>, StoreError> {
        match &record.report_path {
            Some(p) => read_json(&self.root.join(p)).map(Some),
            None => Ok(None),
        }
    }

    pub fn runs_of(&self, experiment_id: &str) -> Vec<&RunRecord> {
        self.index
            .iter()
            .filter(|r| r.experiment_id == experiment_id)
            .collect()
    }

    /// Reconstructs the index from the per-run record files alone.
    pub fn rebuild_index(&self) -> Result<Vec<RunRecord>, StoreError> {
        let mut out = Vec::new();
        for id in self.experiment_ids()? {
            let runs = self.experiment_dir(&id).join("runs");
            let Ok(entries) = fs::read_dir(&runs) else { continue };
            let mut records: Vec<RunRecord> = Vec::new();
            for entry in entries.filter_map(Result::ok) {
                let path = entry.path();
                if path.to_string_lossy().ends_with(".record.json") {
                    records.push(read_json(&path)?);
                }
            }
            records.sort_by_key(|r| r.run_index);
            out.extend(records);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slugs_are_path_safe() {
        assert_eq!(slug("a b/c"), "a_b_c");
        assert_eq!(slug(""), "experiment");
    }

    #[test]
    fn ids_are_sequential_and_unique() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        let config = ExperimentConfig::new("demo", "fullhd", "paper_fig4", "throughput");
        let manifest = crate::media::build_manifest(crate::media::builtin_profile("fullhd").unwrap()).unwrap();
        let traj = Trajectory::paper_fig4();
        let a = store.create_experiment(&config, &manifest, &traj).unwrap();
        let b = store.create_experiment(&config, &manifest, &traj).unwrap();
        assert_eq!(a, "0001-demo");
        assert_eq!(b, "0002-demo");
        assert_eq!(store.load_config(&a).unwrap(), config);
        assert_eq!(store.load_trajectory(&a).unwrap(), traj);
    }
}
