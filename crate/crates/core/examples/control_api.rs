//! The HTTP control API: submit an experiment, poll its telemetry with a
//! cursor until it finishes, then fetch the report.
//!
//! cargo run --release --example control_api

use std::time::Duration;

use abrbench::orchestrator::{start_control_api, ResultsStore, Resolver};
use abrbench::player::AbrRegistry;
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = tempfile_dir()?;
    let rt = tokio::runtime::Runtime::new()?;
    let api = rt.block_on(start_control_api(
        ([127, 0, 0, 1], 0).into(),
        ResultsStore::open(&root)?,
        AbrRegistry::with_builtins(),
        Resolver::default(),
    ))?;
    let base = api.base_url();
    let client = reqwest::blocking::Client::new();

    let abr: Value = client.get(format!("{base}/api/abr")).send()?.json()?;
    println!("policies: {abr}");

    let config = json!({
        "name": "api-demo",
        "profile": "amazon",
        "trajectory": "paper_fig4",
        "abr": {"name": "hybrid"},
        "runs": 3
    });
    let resp = client.post(format!("{base}/api/experiments")).json(&config).send()?;
    println!("submit -> {}", resp.status());
    let id = resp.json::<Value>()?["id"].as_str().unwrap_or_default().to_string();

    let mut cursor = 0u64;
    loop {
        let page: Value = client
            .get(format!("{base}/api/experiments/{id}/telemetry?cursor={cursor}"))
            .send()?
            .json()?;
        let points = page["points"].as_array().map_or(0, Vec::len);
        cursor = page["cursor"].as_u64().unwrap_or(cursor);
        println!("status {}  +{points} points  cursor {cursor}", page["status"]);
        if page["status"] == "done" || page["status"] == "failed" {
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }

    let report: Value = client.get(format!("{base}/api/experiments/{id}/report")).send()?.json()?;
    println!("mean stalls {}", report["aggregate"]["mean"]["stall_count"]);
    println!("mean switches {}", report["aggregate"]["mean"]["quality_switches"]);
    println!("per-run records: {}", report["runs"].as_array().map_or(0, Vec::len));

    rt.block_on(api.shutdown())?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("abrbench-api-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
