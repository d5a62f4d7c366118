//! Metrics from an event log: scalars, series, and a multi-run aggregate.
//! Reads a JSONL log if one is given, otherwise produces one.
//!
//! cargo run --example metrics_report [events.jsonl]

use std::io::BufReader;

use abrbench::link::Trajectory;
use abrbench::media::{build_manifest, builtin_profile};
use abrbench::metrics::{aggregate_runs, compute_report, ScalarMetrics};
use abrbench::player::{run_playback, AbrRegistry, EventLog, PlayerConfig, VirtualLink};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trajectory = Trajectory::paper_fig4();
    let registry = AbrRegistry::with_builtins();
    let manifest = build_manifest(builtin_profile("fullhd")?)?;
    let play = |seed| -> Result<EventLog, Box<dyn std::error::Error>> {
        let mut link = VirtualLink::new(trajectory.clone());
        Ok(run_playback(&manifest, &mut link, &PlayerConfig::default(), seed, &registry)?)
    };
    let log = match std::env::args().nth(1) {
        Some(path) => EventLog::read_jsonl(BufReader::new(std::fs::File::open(path)?))?,
        None => play(0)?,
    };

    let report = compute_report(&log, &trajectory)?;
    println!("{} on {} (window k = {})", report.profile, report.trajectory, report.instability_window);
    for (name, v) in ScalarMetrics::FIELDS.iter().zip(report.scalars.values()) {
        println!("  {name:<28} {}", v.map_or("-".into(), |v| format!("{v:.4}")));
    }
    println!(
        "  series: {} buffer samples, {} bitrate points, {} instability values",
        report.series.buffer.len(),
        report.series.bitrate.len(),
        report.series.instability.len()
    );

    let reports = (0..5)
        .map(|seed| Ok(compute_report(&play(seed)?, &trajectory)?))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let agg = aggregate_runs(&reports)?;
    println!(
        "5 runs: mean stalls {} (stddev {}), mean qoe {:.3}",
        agg.mean.stall_count, agg.stddev.stall_count, agg.mean.qoe_score
    );
    Ok(())
}
