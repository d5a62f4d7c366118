//! The HTTP origin: serves a profile's manifest and synthetic segments.
//! Fetches a few resources from it, then shuts down.
//!
//! cargo run --example segment_server

use abrbench::media::{build_manifest, builtin_profile, Manifest};
use abrbench::server::{serve, ServerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rt = tokio::runtime::Runtime::new()?;
    let manifest = build_manifest(builtin_profile("fullhd")?)?;
    let server = rt.block_on(serve(ServerConfig::new(([127, 0, 0, 1], 0).into(), manifest)))?;
    let base = server.base_url();
    println!("origin listening on {base}");

    let client = reqwest::blocking::Client::new();
    let fetched = Manifest::from_json(&client.get(format!("{base}/manifest.json")).send()?.text()?)?;
    println!("manifest: {} with {} segments", fetched.profile.name, fetched.segment_count);
    for path in ["/video/0/0", "/video/4/157", "/audio/3", "/video/9/0", "/video/x/0"] {
        let resp = client.get(format!("{base}{path}")).send()?;
        let status = resp.status();
        let len = resp.bytes()?.len();
        println!("  GET {path:<14} -> {status} ({len} bytes)");
    }

    rt.block_on(server.shutdown())?;
    Ok(())
}
