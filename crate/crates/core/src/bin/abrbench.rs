use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use abrbench::link::{start_shaping_proxy_seeded, Trajectory};
use abrbench::media::{build_manifest, builtin_profile, Manifest, BUILTIN_PROFILES};
use abrbench::metrics::ScalarMetrics;
use abrbench::orchestrator::{
    export_results, list_runs, run_batch, run_config, start_control_api, ExperimentConfig, ExperimentOutcome,
    ExportFormat, OrchestratorError, ResultsStore, Resolver, RunStatus, Selector,
};
use abrbench::player::AbrRegistry;
use abrbench::server::{serve, ServerConfig};

#[derive(Parser)]
#[command(name = "abrbench", version, about = "Adaptive-streaming testbed")]
struct Cli {
    /// Results store directory.
    #[arg(long, global = true, env = "ABRBENCH_STORE", default_value = "results")]
    store: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config.
    Run { config: PathBuf },
    /// Run every *.json config in a directory.
    Batch { dir: PathBuf },
    /// List stored runs, optionally filtered.
    List { selector: Option<String> },
    /// Print the aggregate and per-run scalars of one experiment.
    Report { id: String },
    /// Export stored runs as CSV or JSON.
    Export {
        selector: String,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List registered ABR policies.
    ListAbr,
    /// Serve the control API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8400")]
        api: String,
    },
    /// Serve a profile's manifest and segments over HTTP.
    Origin {
        #[arg(long, default_value = "127.0.0.1:8401")]
        bind: String,
        #[arg(long, default_value = "fullhd")]
        profile: String,
        #[arg(long)]
        request_log: Option<PathBuf>,
    },
    /// Relay TCP to an upstream, shaped by a trajectory.
    Proxy {
        #[arg(long, default_value = "127.0.0.1:8402")]
        listen: String,
        #[arg(long)]
        upstream: String,
        #[arg(long, default_value = "paper_fig4")]
        trajectory: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append a JSON stats line here every interval.
        #[arg(long)]
        stats_out: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        stats_interval_ms: u64,
    },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<OrchestratorError> for Failure {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Config(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn invalid<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Validation(e.to_string())
}

fn addr(s: &str) -> Result<SocketAddr, Failure> {
    s.to_socket_addrs()
        .map_err(|e| invalid(format!("{s}: {e}")))?
        .next()
        .ok_or_else(|| invalid(format!("{s}: no address")))
}

fn resolver_for(dir: &Path) -> Resolver {
    let cwd = std::env::current_dir().unwrap_or_default();
    Resolver::new(dir).with_trajectory_dir(cwd.join("trajectories")).with_trajectory_dir(cwd)
}

fn print_outcome(outcome: &ExperimentOutcome) {
    println!("experiment {}", outcome.experiment_id);
    for r in &outcome.records {
        match (&r.status, &r.scalars) {
            (RunStatus::Ok, Some(s)) => println!(
                "  run {} seed {}: avg {:.0} kbps, stalls {}, switches {}, qoe {:.3}",
                r.run_index, r.seed, s.avg_download_bitrate_kbps, s.stall_count, s.quality_switches, s.qoe_score
            ),
            _ => println!(
                "  run {} seed {}: failed ({})",
                r.run_index,
                r.seed,
                r.error.as_deref().unwrap_or("unknown")
            ),
        }
    }
    if let Some(agg) = &outcome.aggregate {
        print_scalars("mean", &agg.mean);
    }
}

fn print_scalars(label: &str, s: &ScalarMetrics) {
    println!("  {label}:");
    for (name, v) in ScalarMetrics::FIELDS.iter().zip(s.values()) {
        match v {
            Some(v) => println!("    {name:<28} {v:.4}"),
            None => println!("    {name:<28} -"),
        }
    }
}

fn origin_manifest(profile: &str) -> Result<Manifest, Failure> {
    if BUILTIN_PROFILES.contains(&profile) {
        build_manifest(builtin_profile(profile).map_err(invalid)?).map_err(invalid)
    } else {
        Manifest::load(Path::new(profile)).map_err(invalid)
    }
}

fn tokio_runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let registry = AbrRegistry::with_builtins();
    match cli.command {
        Command::Run { config } => {
            let parsed = ExperimentConfig::load(&config).map_err(invalid)?;
            let dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let mut store = ResultsStore::open(&cli.store).map_err(runtime)?;
            let outcome = run_config(&parsed, &resolver_for(&dir), &mut store, &registry)?;
            print_outcome(&outcome);
            if outcome.failed_runs() > 0 {
                return Err(Failure::Runtime(format!("{} run(s) failed", outcome.failed_runs())));
            }
        }
        Command::Batch { dir } => {
            let mut store = ResultsStore::open(&cli.store).map_err(runtime)?;
            let items = run_batch(&dir, &resolver_for(&dir), &mut store, &registry)?;
            let mut invalid_configs = 0;
            let mut failed_runs = 0;
            for item in &items {
                match &item.result {
                    Ok(outcome) => {
                        println!("{}:", item.file);
                        print_outcome(outcome);
                        failed_runs += outcome.failed_runs();
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", item.file);
                        invalid_configs += 1;
                    }
                }
            }
            println!("{} config(s), {invalid_configs} rejected, {failed_runs} failed run(s)", items.len());
            if failed_runs > 0 {
                return Err(Failure::Runtime(format!("{failed_runs} run(s) failed")));
            }
            if invalid_configs > 0 {
                return Err(Failure::Validation(format!("{invalid_configs} config(s) rejected")));
            }
        }
        Command::List { selector } => {
            let selector: Selector = selector.unwrap_or_default().parse().map_err(invalid)?;
            let store = ResultsStore::open(&cli.store).map_err(runtime)?;
            for r in list_runs(&store, &selector) {
                let status = match r.status {
                    RunStatus::Ok => "ok",
                    RunStatus::Failed => "failed",
                };
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{status}",
                    r.experiment_id, r.run_index, r.seed, r.abr, r.profile, r.trajectory
                );
            }
        }
        Command::Report { id } => {
            let store = ResultsStore::open(&cli.store).map_err(runtime)?;
            store.load_config(&id).map_err(invalid)?;
            println!("experiment {id}");
            for r in store.runs_of(&id) {
                match &r.scalars {
                    Some(s) => print_scalars(&format!("run {} (seed {})", r.run_index, r.seed), s),
                    None => println!("  run {}: failed ({})", r.run_index, r.error.as_deref().unwrap_or("unknown")),
                }
            }
            match store.load_aggregate(&id).map_err(runtime)? {
                Some(agg) => {
                    print_scalars("mean", &agg.mean);
                    print_scalars("stddev", &agg.stddev);
                }
                None => println!("  no successful runs"),
            }
        }
        Command::Export { selector, format, out } => {
            let selector: Selector = selector.parse().map_err(invalid)?;
            let format: ExportFormat = format.parse().map_err(invalid)?;
            let store = ResultsStore::open(&cli.store).map_err(runtime)?;
            let doc = export_results(&store, &selector, format);
            match out {
                Some(path) => std::fs::write(&path, doc).map_err(runtime)?,
                None => print!("{doc}"),
            }
        }
        Command::ListAbr => {
            for name in registry.names() {
                println!("{name}");
            }
        }
        Command::Serve { api } => {
            let bind = addr(&api)?;
            let store = ResultsStore::open(&cli.store).map_err(runtime)?;
            let cwd = std::env::current_dir().unwrap_or_default();
            let rt = tokio_runtime()?;
            rt.block_on(async {
                let handle = start_control_api(bind, store, registry, Resolver::new(cwd))
                    .await
                    .map_err(runtime)?;
                println!("control API on {}", handle.base_url());
                tokio::signal::ctrl_c().await.map_err(runtime)?;
                handle.shutdown().await.map_err(runtime)
            })?;
        }
        Command::Origin { bind, profile, request_log } => {
            let mut config = ServerConfig::new(addr(&bind)?, origin_manifest(&profile)?);
            config.request_log_path = request_log;
            let rt = tokio_runtime()?;
            rt.block_on(async {
                let handle = serve(config).await.map_err(runtime)?;
                println!("origin on {}", handle.base_url());
                tokio::signal::ctrl_c().await.map_err(runtime)?;
                handle.shutdown().await.map_err(runtime)
            })?;
        }
        Command::Proxy {
            listen,
            upstream,
            trajectory,
            seed,
            stats_out,
            stats_interval_ms,
        } => {
            let traj: Trajectory = resolver_for(Path::new(".")).trajectory(&trajectory).map_err(invalid)?;
            let (listen, upstream) = (addr(&listen)?, addr(&upstream)?);
            let rt = tokio_runtime()?;
            rt.block_on(async {
                let handle = start_shaping_proxy_seeded(traj, listen, upstream, seed)
                    .await
                    .map_err(runtime)?;
                println!("proxy on {} -> {upstream}", handle.local_addr());
                let reader = handle.stats_reader();
                let mut tick = tokio::time::interval(Duration::from_millis(stats_interval_ms.max(10)));
                let mut out = match &stats_out {
                    Some(p) => Some(
                        std::fs::OpenOptions::new()
                            .create(true)
                            .append(true)
                            .open(p)
                            .map_err(runtime)?,
                    ),
                    None => None,
                };
                loop {
                    tokio::select! {
                        _ = tick.tick() => {
                            let line = serde_json::to_string(&reader.stats()).expect("stats serialize");
                            match out.as_mut() {
                                Some(f) => {
                                    use std::io::Write;
                                    writeln!(f, "{line}").map_err(runtime)?;
                                }
                                None => println!("{line}"),
                            }
                        }
                        r = tokio::signal::ctrl_c() => {
                            r.map_err(runtime)?;
                            break;
                        }
                    }
                }
                handle.shutdown().await;
                Ok::<(), Failure>(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("ABRBENCH_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
