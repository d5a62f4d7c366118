//! Stepped link schedule: stage table, point queries, and exact transfer plans.
//!
//! cargo run --example trajectory_replay [trajectory.json]

use abrbench::link::Trajectory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trajectory = match std::env::args().nth(1) {
        Some(path) => Trajectory::load(path.as_ref())?,
        None => Trajectory::paper_fig4(),
    };
    println!(
        "{}: {} stages, {} s, repeat {:?}",
        trajectory.name(),
        trajectory.stages().len(),
        trajectory.total_duration(),
        trajectory.repeat()
    );
    for (stage, start) in trajectory.stages().iter().zip(trajectory.stage_starts()) {
        println!(
            "  t={start:>5} s  {:>6} kbps for {:>3} s  delay {} ms  loss {} %",
            stage.bandwidth_kbps, stage.duration_s, stage.delay_ms, stage.loss_pct
        );
    }
    for t in [0.0, 100.0, 200.0, 400.0, 600.0] {
        println!("  params_at({t}) = {:?}", trajectory.params_at(t));
    }

    // a 2 MB download issued 5 s before the first stage change
    let plan = trajectory.transfer_plan(60.0, 2_000_000);
    println!("2 MB at t=60: first byte {:.3} s, done {:.3} s", plan.first_byte, plan.finish);
    for s in &plan.slices {
        println!(
            "  stage {} [{:.3}, {:.3}] {:.0} bits at {:.0} bit/s",
            s.stage_index, s.from, s.to, s.bits, s.effective_bps
        );
    }
    println!(
        "mean effective bandwidth over the first 300 s: {:.1} kbps",
        trajectory.mean_effective_kbps(0.0, 300.0)
    );
    Ok(())
}
