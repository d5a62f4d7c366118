use std::fmt;
use std::str::FromStr;

use super::store::{ResultsStore, RunRecord, RunStatus};
use crate::metrics::ScalarMetrics;

/// Filters runs by `key=value` terms joined with commas, all of which must
/// match. Keys: `experiment` (name or id), `id`, `abr`, `profile`,
/// `trajectory`, `mode`, `status`. A bare term is shorthand for
/// `experiment=<term>`; an empty selector, `all` or `*` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Selector {
    terms: Vec<(Key, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Key {
    Experiment,
    Id,
    Abr,
    Profile,
    Trajectory,
    Mode,
    Status,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectorError(pub String);

impl fmt::Display for SelectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bad selector: {}", self.0)
    }
}

impl std::error::Error for SelectorError {}

impl Selector {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn experiment(name: impl Into<String>) -> Self {
        Self {
            terms: vec![(Key::Experiment, name.into())],
        }
    }

    pub fn matches(&self, r: &RunRecord) -> bool {
        self.terms.iter().all(|(key, value)| match key {
            Key::Experiment => r.experiment == *value || r.experiment_id == *value,
            Key::Id => r.experiment_id == *value,
            Key::Abr => r.abr == *value,
            Key::Profile => r.profile == *value,
            Key::Trajectory => r.trajectory == *value,
            Key::Mode => r.mode.to_string() == *value,
            Key::Status => match r.status {
                RunStatus::Ok => value == "ok",
                RunStatus::Failed => value == "failed",
            },
        })
    }
}

impl FromStr for Selector {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "all" || s == "*" {
            return Ok(Self::all());
        }
        let mut terms = Vec::new();
        for term in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = match term.split_once('=') {
                None => (Key::Experiment, term),
                Some((k, v)) => {
                    let key = match k.trim() {
                        "experiment" | "name" => Key::Experiment,
                        "id" => Key::Id,
                        "abr" => Key::Abr,
                        "profile" => Key::Profile,
                        "trajectory" => Key::Trajectory,
                        "mode" => Key::Mode,
                        "status" => Key::Status,
                        other => return Err(SelectorError(format!("unknown key `{other}`"))),
                    };
                    (key, v.trim())
                }
            };
            if value.is_empty() {
                return Err(SelectorError(format!("empty value in `{term}`")));
            }
            terms.push((key, value.to_string()));
        }
        Ok(Self { terms })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = SelectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(SelectorError(format!("unknown format `{other}`"))),
        }
    }
}

/// Matching runs in the order they were written.
pub fn list_runs<'a>(store: &'a ResultsStore, selector: &Selector) -> Vec<&'a RunRecord> {
    store.records().iter().filter(|r| selector.matches(r)).collect()
}

pub const CSV_ID_COLUMNS: [&str; 9] = [
    "experiment_id",
    "experiment",
    "run_index",
    "seed",
    "abr",
    "profile",
    "trajectory",
    "mode",
    "status",
];

fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => x.to_string(),
    }
}

/// One row per run: identity columns, every scalar metric, then `error`.
/// Nothing matched gives an empty document (`""` or `[]`).
pub fn export_results(store: &ResultsStore, selector: &Selector, format: ExportFormat) -> String {
    let runs = list_runs(store, selector);
    match format {
        ExportFormat::Json => {
            let mut out = serde_json::to_string_pretty(&runs).expect("records serialize");
            out.push('\n');
            out
        }
        ExportFormat::Csv => {
            if runs.is_empty() {
                return String::new();
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            let header: Vec<&str> = CSV_ID_COLUMNS
                .iter()
                .chain(ScalarMetrics::FIELDS.iter())
                .copied()
                .chain(["error"])
                .collect();
            w.write_record(&header).expect("in-memory write");
            for r in runs {
                let mut row = vec![
                    r.experiment_id.clone(),
                    r.experiment.clone(),
                    r.run_index.to_string(),
                    r.seed.to_string(),
                    r.abr.clone(),
                    r.profile.clone(),
                    r.trajectory.clone(),
                    r.mode.to_string(),
                    match r.status {
                        RunStatus::Ok => "ok".into(),
                        RunStatus::Failed => "failed".into(),
                    },
                ];
                match &r.scalars {
                    Some(s) => row.extend(s.values().into_iter().map(cell)),
                    None => row.extend(std::iter::repeat_n(String::new(), ScalarMetrics::FIELDS.len())),
                }
                row.push(r.error.clone().unwrap_or_default());
                w.write_record(&row).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_terms() {
        let s: Selector = "abr=buffer, profile=amazon".parse().unwrap();
        assert_eq!(s.terms.len(), 2);
        assert_eq!("".parse::<Selector>().unwrap(), Selector::all());
        assert_eq!("demo".parse::<Selector>().unwrap(), Selector::experiment("demo"));
        assert!("colour=red".parse::<Selector>().is_err());
        assert!("abr=".parse::<Selector>().is_err());
    }

    #[test]
    fn infinite_cells() {
        assert_eq!(cell(Some(f64::INFINITY)), "inf");
        assert_eq!(cell(None), "");
        assert_eq!(cell(Some(0.5)), "0.5");
    }
}
