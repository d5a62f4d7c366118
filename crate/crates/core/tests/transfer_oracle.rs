mod common;

use abrbench::link::Trajectory;
use common::{fixed_step_finish, random_ms_stages, rng, trajectory_of, MsStage};
use proptest::prelude::*;
use rand::Rng;

fn on_boundary(stages: &[MsStage], cycle: bool, ms: u64) -> bool {
    let total: u64 = stages.iter().map(|s| s.dur_ms).sum();
    let pos = if cycle { ms % total } else { ms };
    let mut acc = 0;
    stages.iter().any(|s| {
        acc += s.dur_ms;
        acc == pos
    }) || pos == 0
}

#[test]
fn thousand_random_transfers_match_fixed_step_oracle() {
    let mut r = rng(42);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let stages = random_ms_stages(&mut r, 6);
        let cycle = r.random_bool(0.5);
        let total: u64 = stages.iter().map(|s| s.dur_ms).sum();
        let start_ms = loop {
            let ms = r.random_range(1..=2 * total);
            if !on_boundary(&stages, cycle, ms) {
                break ms;
            }
        };
        let size = r.random_range(1..=500_000u64);
        let traj = trajectory_of(&stages, cycle);
        let start = start_ms as f64 / 1000.0;
        let got = traj.transfer_finish_time(start, size);
        let want = fixed_step_finish(&stages, cycle, start_ms, size);
        let rel = ((got - start) - (want - start)).abs() / (want - start);
        worst = worst.max(rel);
        assert!(rel < 1e-3, "case {case}: got {got}, oracle {want}, stages {stages:?}, cycle {cycle}");
    }
    println!("worst relative duration error {worst:e}");
}

#[test]
fn paper_schedule_hand_values() {
    let traj = Trajectory::paper_fig4();
    // 70 ms one way, 750 kbps for the first 65 s
    let f = traj.transfer_finish_time(0.0, 1_000_000);
    assert!((f - (0.14 + 8e6 / 750e3)).abs() < 1e-9);
    // crosses the 65 s boundary into 350 kbps
    let f = traj.transfer_finish_time(64.0, 1_000_000);
    let left = 8e6 - 750e3 * (65.0 - 64.14);
    assert!((f - (65.0 + left / 350e3)).abs() < 1e-9);
}

#[test]
fn zero_bytes_finish_at_first_byte() {
    let traj = Trajectory::paper_fig4();
    let plan = traj.transfer_plan(10.0, 0);
    assert_eq!(plan.finish, plan.first_byte);
    assert!(plan.slices.is_empty());
}

proptest! {
    #[test]
    fn drained_bits_equal_payload(seed in any::<u64>(), size in 1u64..2_000_000, start in 0.0f64..1000.0) {
        let mut r = rng(seed);
        let stages = random_ms_stages(&mut r, 5);
        let traj = trajectory_of(&stages, r.random_bool(0.5));
        let plan = traj.transfer_plan(start, size);
        let bits: f64 = plan.slices.iter().map(|s| s.bits).sum();
        prop_assert!((bits - size as f64 * 8.0).abs() <= 1e-6 * size as f64 * 8.0);
        prop_assert!(plan.slices.windows(2).all(|w| w[0].to <= w[1].from + 1e-9));
        prop_assert!(plan.finish >= plan.first_byte && plan.first_byte >= start);
    }

    #[test]
    fn larger_payloads_never_finish_sooner(seed in any::<u64>(), a in 1u64..1_000_000, b in 1u64..1_000_000, start in 0.0f64..500.0) {
        let mut r = rng(seed);
        let traj = trajectory_of(&random_ms_stages(&mut r, 5), r.random_bool(0.5));
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(traj.transfer_finish_time(start, lo) <= traj.transfer_finish_time(start, hi));
    }
}
