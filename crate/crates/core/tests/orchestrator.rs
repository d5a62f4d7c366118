use abrbench::metrics::{aggregate_runs, compute_report, AggregateReport, ScalarMetrics};
use abrbench::orchestrator::{
    export_results, list_runs, run_batch, run_config, run_experiment, run_prepared, ExperimentConfig, ExportFormat,
    Mode, OrchestratorError, ResultsStore, Resolver, RunOptions, RunOutcome, RunRecord, RunSink, RunStatus, Selector,
    StoreError,
};
use abrbench::player::AbrRegistry;

fn short(name: &str, profile: &str, abr: &str, runs: u32) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(name, profile, "paper_fig4", abr);
    c.runs = runs;
    c.total_duration_s = Some(120.0);
    c
}

fn run(store: &mut ResultsStore, config: &ExperimentConfig) -> abrbench::orchestrator::ExperimentOutcome {
    run_config(config, &Resolver::new("."), store, &AbrRegistry::with_builtins()).unwrap()
}

#[test]
fn records_land_in_the_store_and_index_rebuilds() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let a = run(&mut store, &short("alpha", "fullhd", "throughput", 3));
    let b = run(&mut store, &short("beta", "amazon", "buffer", 2));
    assert_eq!(a.experiment_id, "0001-alpha");
    assert_eq!(b.experiment_id, "0002-beta");
    assert_eq!(store.records().len(), 5);
    assert_eq!(store.rebuild_index().unwrap(), store.records());
    let reopened = ResultsStore::open(dir.path()).unwrap();
    assert_eq!(reopened.records(), store.records());
    let seeds: Vec<u64> = a.records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [0, 1, 2]);
    for r in store.records() {
        assert_eq!(r.status, RunStatus::Ok);
        assert!(dir.path().join(&r.log_path).is_file());
    }
    let agg = store.load_aggregate("0001-alpha").unwrap().unwrap();
    assert_eq!(Some(agg), a.aggregate);
}

#[test]
fn one_run_aggregates_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let out = run(&mut store, &short("solo", "fullhd", "hybrid", 1));
    let agg = out.aggregate.unwrap();
    assert_eq!(agg.runs, 1);
    assert_eq!(Some(agg.mean), out.records[0].scalars);
    assert_eq!(agg.stddev.avg_download_bitrate_kbps, 0.0);
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let registry = AbrRegistry::with_builtins();
    let config = short("par", "amazon", "throughput", 4);
    let resolved = Resolver::new(".").resolve(&config, &registry).unwrap();
    let logs = |parallel: bool| {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultsStore::open(dir.path()).unwrap();
        run_experiment(&resolved, &mut store, &registry, RunOptions { parallel, observer: None }).unwrap();
        store
            .records()
            .iter()
            .map(|r| std::fs::read(dir.path().join(&r.log_path)).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(logs(true), logs(false));
}

#[test]
fn exports_recompute_from_stored_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    run(&mut store, &short("x", "fullhd", "throughput", 2));
    run(&mut store, &short("y", "amazon", "buffer", 2));

    let json = export_results(&store, &Selector::all(), ExportFormat::Json);
    let exported: Vec<RunRecord> = serde_json::from_str(&json).unwrap();
    assert_eq!(exported.len(), 4);
    for r in &exported {
        let log = store.load_log(r).unwrap();
        let traj = store.load_trajectory(&r.experiment_id).unwrap();
        let report = compute_report(&log, &traj).unwrap();
        assert_eq!(Some(report.scalars), r.scalars);
        assert_eq!(store.load_report(r).unwrap(), Some(report));
    }

    let csv = export_results(&store, &"abr=buffer".parse().unwrap(), ExportFormat::Csv);
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[0], "experiment_id");
    assert_eq!(header.last().unwrap(), "error");
    for field in ScalarMetrics::FIELDS {
        assert!(header.iter().any(|h| h == field), "{field}");
    }
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for (row, r) in rows.iter().zip(list_runs(&store, &"abr=buffer".parse().unwrap())) {
        let s = r.scalars.unwrap();
        assert_eq!(&row[col("abr")], "buffer");
        assert_eq!(row[col("instability")].parse::<f64>().unwrap(), s.instability);
        assert_eq!(row[col("qoe_score")].parse::<f64>().unwrap(), s.qoe_score);
    }
}

#[test]
fn selectors_filter_and_empty_selections_export_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    run(&mut store, &short("keep", "fullhd", "throughput", 2));
    run(&mut store, &short("other", "amazon", "hybrid", 1));
    assert_eq!(list_runs(&store, &"keep".parse().unwrap()).len(), 2);
    assert_eq!(list_runs(&store, &"profile=amazon".parse().unwrap()).len(), 1);
    assert_eq!(list_runs(&store, &"profile=amazon,abr=throughput".parse().unwrap()).len(), 0);
    assert_eq!(list_runs(&store, &"all".parse().unwrap()).len(), 3);
    let none: Selector = "name=missing".parse().unwrap();
    assert_eq!(export_results(&store, &none, ExportFormat::Csv), "");
    let json: Vec<RunRecord> = serde_json::from_str(&export_results(&store, &none, ExportFormat::Json)).unwrap();
    assert!(json.is_empty());
    assert!("colour=red".parse::<Selector>().is_err());
}

#[test]
fn invalid_configs_report_every_bad_field() {
    let mut c = short("", "nope", "zigzag", 0);
    c.trajectory = "missing_schedule".into();
    c.player.buffer_capacity_s = 2.0;
    let err = Resolver::new(".").resolve(&c, &AbrRegistry::with_builtins()).unwrap_err();
    let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
    for f in ["name", "runs", "abr.name", "profile", "trajectory"] {
        assert!(fields.contains(&f), "{f} missing from {fields:?}");
    }
    assert!(ExperimentConfig::from_json(r#"{"name":"a","profile":"fullhd","trajectory":"paper_fig4","colour":1}"#).is_err());
}

#[test]
fn batch_runs_every_config_and_keeps_going_past_bad_ones() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    std::fs::create_dir(&configs).unwrap();
    for (file, c) in [("a.json", short("a", "fullhd", "buffer", 1)), ("c.json", short("c", "amazon", "hybrid", 1))] {
        std::fs::write(configs.join(file), serde_json::to_string(&c).unwrap()).unwrap();
    }
    std::fs::write(configs.join("b.json"), "{ not json").unwrap();
    // a trajectory file next to the configs resolves by name
    std::fs::create_dir(configs.join("trajectories")).unwrap();
    std::fs::write(
        configs.join("trajectories/flat.json"),
        r#"{"trajectory_version":1,"stages":[{"bandwidth_kbps":1500,"duration_s":10}]}"#,
    )
    .unwrap();
    let mut flat = short("d", "fullhd", "throughput", 1);
    flat.trajectory = "flat".into();
    std::fs::write(configs.join("d.json"), serde_json::to_string(&flat).unwrap()).unwrap();

    let mut store = ResultsStore::open(dir.path().join("store")).unwrap();
    let items = run_batch(&configs, &Resolver::new(&configs), &mut store, &AbrRegistry::with_builtins()).unwrap();
    let files: Vec<&str> = items.iter().map(|i| i.file.as_str()).collect();
    assert_eq!(files, ["a.json", "b.json", "c.json", "d.json"]);
    assert!(matches!(items[1].result, Err(OrchestratorError::Config(_))));
    assert_eq!(store.records().len(), 3);
    assert_eq!(store.records()[2].trajectory, "flat");
}

struct BrokenDisk;

impl RunSink for BrokenDisk {
    fn write_run(&mut self, _: &str, _: &ExperimentConfig, _: &RunOutcome) -> Result<RunRecord, StoreError> {
        Err(StoreError::Io {
            path: "runs/0.events.jsonl".into(),
            source: std::io::Error::other("disk full"),
        })
    }

    fn write_aggregate(&mut self, _: &str, _: &AggregateReport) -> Result<(), StoreError> {
        Ok(())
    }
}

#[test]
fn store_write_failures_abort() {
    let registry = AbrRegistry::with_builtins();
    let resolved = Resolver::new(".").resolve(&short("z", "fullhd", "buffer", 2), &registry).unwrap();
    let err = run_prepared(&resolved, "0001-z", &mut BrokenDisk, &registry, RunOptions::default()).unwrap_err();
    assert!(matches!(err, OrchestratorError::Store(StoreError::Io { .. })));
}

#[test]
fn failed_runs_are_recorded_without_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let config = short("f", "fullhd", "throughput", 1);
    let resolved = Resolver::new(".").resolve(&config, &AbrRegistry::with_builtins()).unwrap();
    let id = store.create_experiment(&config, &resolved.manifest, &resolved.trajectory).unwrap();
    let mut log = abrbench::player::run_playback(
        &resolved.manifest,
        &mut abrbench::player::VirtualLink::new(resolved.trajectory.clone()),
        &resolved.player,
        0,
        &AbrRegistry::with_builtins(),
    )
    .unwrap();
    log.events.truncate(3);
    log.header.failure = Some("connection reset".into());
    let now = chrono::Utc::now();
    let record = store
        .write_run(
            &id,
            &config,
            &RunOutcome {
                run_index: 0,
                seed: 0,
                log,
                report: None,
                error: Some("connection reset".into()),
                started_at: now,
                finished_at: now,
            },
        )
        .unwrap();
    assert_eq!(record.status, RunStatus::Failed);
    assert!(record.scalars.is_none() && record.report_path.is_none());
    assert!(store.load_log(&record).unwrap().is_failed());
    let csv = export_results(&store, &Selector::all(), ExportFormat::Csv);
    assert!(csv.lines().nth(1).unwrap().ends_with(",failed,,,,,,,,,,,,connection reset"));
}

#[test]
fn proxy_mode_plays_through_real_sockets() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = ResultsStore::open(dir.path()).unwrap();
    let mut config = short("live", "fullhd", "throughput", 1);
    config.mode = Mode::Proxy;
    config.total_duration_s = Some(6.0);
    config.player.startup_threshold_s = 2.0;
    config.player.rebuffer_threshold_s = 2.0;
    let out = run(&mut store, &config);
    assert_eq!(out.failed_runs(), 0, "{:?}", out.records[0].error);
    let s = out.records[0].scalars.unwrap();
    assert_eq!(s.segments, 2.0);
    // 750 kbps: the first 200 kB segment plus audio takes over 2 s of wall time
    assert!(s.startup_time_s.unwrap() > 2.0);
    assert_eq!(aggregate_runs(&[store.load_report(&out.records[0]).unwrap().unwrap()]).unwrap(), out.aggregate.unwrap());
}
