//! Wall-clock link shaping: origin behind the token-bucket proxy, a bulk
//! download through it, and the proxy's live stats across a stage change.
//!
//! cargo run --release --example shaping_proxy

use std::io::Read;
use std::time::{Duration, Instant};

use abrbench::link::{start_shaping_proxy, LinkStage, RepeatMode, Trajectory};
use abrbench::media::{build_manifest, ContentProfile, Representation};
use abrbench::server::{serve, ServerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // one 20 Mbit/s representation, 4 s segments: 10 MB per segment
    let profile = ContentProfile {
        name: "bulk".into(),
        representations: vec![Representation {
            id: 0,
            bitrate_kbps: 20_000,
            width: 1920,
            height: 1080,
        }],
        segment_duration_s: 4.0,
        total_duration_s: 8.0,
        audio_bitrate_kbps: 128,
        include_audio: false,
        size_jitter: None,
    };
    let trajectory = Trajectory::new(
        "drop",
        vec![LinkStage::new(2000.0, 3.0), LinkStage::new(500.0, 60.0)],
        RepeatMode::Clamp,
    )?;

    let rt = tokio::runtime::Runtime::new()?;
    let loopback = ([127, 0, 0, 1], 0).into();
    let origin = rt.block_on(serve(ServerConfig::new(loopback, build_manifest(profile)?)))?;
    let proxy = rt.block_on(start_shaping_proxy(trajectory, loopback, origin.local_addr()))?;
    let stats = proxy.stats_reader();
    let url = format!("http://{}/video/0/0", proxy.local_addr());

    let reader = std::thread::spawn(move || -> Result<u64, reqwest::Error> {
        let mut body = reqwest::blocking::get(url)?;
        let mut buf = vec![0u8; 64 * 1024];
        let mut total = 0u64;
        let start = Instant::now();
        while start.elapsed() < Duration::from_secs(5) {
            match body.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => total += n as u64,
            }
        }
        Ok(total)
    });
    for _ in 0..10 {
        std::thread::sleep(Duration::from_millis(500));
        let s = stats.stats();
        println!(
            "t={:>5.2} s  stage {}  target {:>6.0} kbps  measured {:>7.1} kbps  forwarded {} bytes",
            s.elapsed_s, s.stage_index, s.bandwidth_kbps, s.measured_kbps, s.forwarded_bytes
        );
    }
    let received = reader.join().expect("reader thread")?;
    println!("downloaded {received} bytes in 5 s");

    rt.block_on(async {
        proxy.shutdown().await;
        origin.shutdown().await
    })?;
    Ok(())
}
