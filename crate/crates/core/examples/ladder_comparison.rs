//! Dense vs sparse ladder under the stepped bandwidth schedule, for every
//! built-in policy. Five seeded runs per cell, means printed.
//!
//! cargo run --example ladder_comparison

use abrbench::link::Trajectory;
use abrbench::media::{build_manifest, builtin_profile};
use abrbench::metrics::{aggregate_runs, compute_report};
use abrbench::player::{run_playback, AbrRegistry, AbrSpec, PlayerConfig, VirtualLink};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let registry = AbrRegistry::with_builtins();
    let trajectory = Trajectory::paper_fig4();
    println!(
        "{:<8} {:<11} {:>9} {:>7} {:>8} {:>9} {:>11} {:>12} {:>8}",
        "profile", "abr", "avg kbps", "stalls", "stall s", "switches", "instability", "inefficiency", "qoe"
    );
    for profile in ["fullhd", "amazon"] {
        let manifest = build_manifest(builtin_profile(profile)?)?;
        for abr in ["throughput", "buffer", "hybrid"] {
            let config = PlayerConfig::default().with_abr(AbrSpec::named(abr));
            let reports = (0..5)
                .map(|seed| {
                    let mut link = VirtualLink::new(trajectory.clone());
                    let log = run_playback(&manifest, &mut link, &config, seed, &registry)?;
                    Ok(compute_report(&log, &trajectory)?)
                })
                .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
            let m = aggregate_runs(&reports)?.mean;
            println!(
                "{profile:<8} {abr:<11} {:>9.0} {:>7.1} {:>8.1} {:>9.1} {:>11.4} {:>12.4} {:>8.3}",
                m.avg_download_bitrate_kbps,
                m.stall_count,
                m.total_stall_time_s,
                m.quality_switches,
                m.instability,
                m.inefficiency,
                m.qoe_score
            );
        }
    }
    Ok(())
}
