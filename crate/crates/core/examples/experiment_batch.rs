//! The full evaluation grid (2 profiles x 3 policies, 5 runs each) through
//! the results store, followed by a CSV export of one policy.
//!
//! cargo run --release --example experiment_batch [store-dir]

use abrbench::orchestrator::{
    export_results, run_config, ExperimentConfig, ExportFormat, ResultsStore, Resolver, Selector,
};
use abrbench::player::AbrRegistry;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = match std::env::args().nth(1) {
        Some(dir) => std::path::PathBuf::from(dir),
        None => std::env::temp_dir().join("abrbench-example-store"),
    };
    let mut store = ResultsStore::open(&root)?;
    let registry = AbrRegistry::with_builtins();
    let resolver = Resolver::default();

    for profile in ["fullhd", "amazon"] {
        for abr in ["throughput", "buffer", "hybrid"] {
            let config = ExperimentConfig::new(format!("{profile}-{abr}"), profile, "paper_fig4", abr);
            let outcome = run_config(&config, &resolver, &mut store, &registry)?;
            let mean = outcome.aggregate.as_ref().map(|a| a.mean);
            println!(
                "{:<24} stalls {:>5.1}  switches {:>5.1}",
                outcome.experiment_id,
                mean.map_or(f64::NAN, |m| m.stall_count),
                mean.map_or(f64::NAN, |m| m.quality_switches)
            );
        }
    }
    println!("store at {} holds {} runs", root.display(), store.records().len());

    let csv = export_results(&store, &"abr=throughput".parse::<Selector>()?, ExportFormat::Csv);
    print!("{csv}");
    Ok(())
}
