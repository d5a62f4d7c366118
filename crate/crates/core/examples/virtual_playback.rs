//! One deterministic playback run in virtual time; prints the event timeline
//! summary and writes the JSONL event log.
//!
//! cargo run --example virtual_playback [abr] [profile] [out.jsonl]

use abrbench::link::Trajectory;
use abrbench::media::{build_manifest, builtin_profile};
use abrbench::player::{run_playback, AbrRegistry, AbrSpec, EventKind, PlayerConfig, VirtualLink};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let abr = args.next().unwrap_or_else(|| "throughput".into());
    let profile = args.next().unwrap_or_else(|| "fullhd".into());
    let out = args.next();

    let manifest = build_manifest(builtin_profile(&profile)?)?;
    let trajectory = Trajectory::paper_fig4();
    let mut link = VirtualLink::new(trajectory);
    let config = PlayerConfig::default().with_abr(AbrSpec::named(abr));
    let log = run_playback(&manifest, &mut link, &config, 0, &AbrRegistry::with_builtins())?;

    for e in &log.events {
        match &e.kind {
            EventKind::StartupComplete => println!("{:>8.3}  playback started", e.t),
            EventKind::QualitySwitch { from_rep, to_rep } => {
                println!("{:>8.3}  switch rep {from_rep} -> {to_rep}", e.t)
            }
            EventKind::StallStart => println!("{:>8.3}  stall", e.t),
            EventKind::StallEnd => println!("{:>8.3}  resume", e.t),
            EventKind::End => println!("{:>8.3}  end", e.t),
            _ => {}
        }
    }
    println!("{} events, {} video segments", log.events.len(), log.video_segments().len());
    if let Some(path) = out {
        log.write_jsonl(std::fs::File::create(&path)?)?;
        println!("event log written to {path}");
    }
    Ok(())
}
