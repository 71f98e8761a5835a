//! Generate the planted corpus and run the whole pipeline on it.
//!
//! ```text
//! cargo run --release --example full_pipeline -- [model] [mode] [out_dir]
//! cargo run --release --example full_pipeline -- transms prototypical /tmp/mistlink-run
//! ```

use std::time::Instant;

use mistlink::pipeline::{run_pipeline, PipelineConfig};
use mistlink::synthetic::{planted_corpus, PlantedSpec};

fn main() -> mistlink::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = args.first().map_or("transms", String::as_str).parse()?;
    let mode = args.get(1).map_or("prototypical", String::as_str).parse()?;
    let dir = std::path::PathBuf::from(args.get(2).map_or("target/planted-run", String::as_str));

    let data = dir.join("data");
    planted_corpus(&PlantedSpec::default(), 7).write(&data)?;

    let mut cfg = PipelineConfig {
        model,
        mode,
        out_dir: dir.join("out"),
        ..Default::default()
    };
    cfg.inputs.tweets = data.join("tweets.jsonl");
    cfg.inputs.mists = data.join("mists.jsonl");
    cfg.inputs.judgments = data.join("judgments.jsonl");

    let t0 = Instant::now();
    let manifest = run_pipeline(&cfg, true)?;
    let m = manifest.metrics.expect("eval ran");
    println!(
        "{model}-{mode}: P={:.1} R={:.1} F1={:.1} in {:.1}s",
        m.precision,
        m.recall,
        m.f1,
        t0.elapsed().as_secs_f64()
    );
    for s in &manifest.stages {
        println!("  {:<12} {:>7.2}s", s.stage.name(), s.seconds);
    }
    Ok(())
}
