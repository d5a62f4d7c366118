//! Built-in content profiles, per-segment sizes, and the manifest document.
//!
//! cargo run --example profiles_and_manifest [fullhd|amazon]

use abrbench::media::{build_manifest, builtin_profile, segment_size_bytes, BUILTIN_PROFILES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let wanted = std::env::args().nth(1);
    for name in BUILTIN_PROFILES {
        if wanted.as_deref().is_some_and(|w| w != name) {
            continue;
        }
        let profile = builtin_profile(name)?;
        println!(
            "{name}: {} representations, {} s segments, {} s content, audio {} kbps",
            profile.representations.len(),
            profile.segment_duration_s,
            profile.total_duration_s,
            profile.audio_bitrate_kbps
        );
        for rep in &profile.representations {
            println!(
                "  rep {:>2}  {:>4}x{:<4} {:>6} kbps  {:>8} bytes/segment",
                rep.id,
                rep.width,
                rep.height,
                rep.bitrate_kbps,
                segment_size_bytes(rep.bitrate_kbps, profile.segment_duration_s)?
            );
        }
        let manifest = build_manifest(profile)?;
        let last = manifest.segment_count - 1;
        println!(
            "  {} segments; last lasts {} s and is {} bytes at rep 0",
            manifest.segment_count,
            manifest.segment_duration(last),
            manifest.video_segment_bytes(0, last).unwrap_or(0)
        );
        println!("  video url of segment 7 at rep 2: {}", manifest.url_template.video_path(2, 7));
        if wanted.is_some() {
            println!("{}", manifest.to_json());
        }
    }
    Ok(())
}
