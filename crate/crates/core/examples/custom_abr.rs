//! Registering a user-defined rate-adaptation policy next to the built-ins.
//!
//! cargo run --example custom_abr

use abrbench::link::Trajectory;
use abrbench::media::{build_manifest, builtin_profile};
use abrbench::metrics::compute_report;
use abrbench::player::{
    run_playback, AbrContext, AbrParams, AbrRegistry, AbrSpec, PlayerConfig, VirtualLink,
};

/// Steps up one rung when the buffer is above `high_s`, down one when below
/// `low_s`, holds otherwise.
fn ladder_walker(ctx: &AbrContext<'_>, params: &AbrParams) -> usize {
    let low = params.get("low_s").copied().unwrap_or(8.0);
    let high = params.get("high_s").copied().unwrap_or(16.0);
    let top = ctx.ladder.len() - 1;
    match ctx.last_rep_id {
        None => 0,
        Some(r) if ctx.buffer_level_s > high => (r + 1).min(top),
        Some(r) if ctx.buffer_level_s < low => r.saturating_sub(1),
        Some(r) => r,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut registry = AbrRegistry::with_builtins();
    registry.register("ladder_walker", ladder_walker)?;
    println!("policies: {}", registry.names().collect::<Vec<_>>().join(", "));

    let manifest = build_manifest(builtin_profile("amazon")?)?;
    let trajectory = Trajectory::paper_fig4();
    let mut walker = AbrSpec::named("ladder_walker");
    walker.params.insert("low_s".into(), 6.0);
    walker.params.insert("high_s".into(), 14.0);

    for abr in [AbrSpec::named("throughput"), walker] {
        let name = abr.name.clone();
        let config = PlayerConfig::default().with_abr(abr);
        let mut link = VirtualLink::new(trajectory.clone());
        let log = run_playback(&manifest, &mut link, &config, 0, &registry)?;
        let s = compute_report(&log, &trajectory)?.scalars;
        println!(
            "{name:<14} avg {:.0} kbps, {} stalls ({:.1} s), {} switches, instability {:.4}, inefficiency {:.4}",
            s.avg_download_bitrate_kbps,
            s.stall_count,
            s.total_stall_time_s,
            s.quality_switches,
            s.instability,
            s.inefficiency
        );
    }
    Ok(())
}
