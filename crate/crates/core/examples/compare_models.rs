//! Train every model kind on the planted corpus and compare both prediction
//! modes on the test split, in memory.
//!
//! ```text
//! cargo run --release --example compare_models
//! ```

use std::collections::BTreeSet;

use mistlink::corpus::TweetDoc;
use mistlink::encoder::FeatureEncoder;
use mistlink::eval::{count, micro_prf};
use mistlink::mkg::{split_judgments, MisinfoKnowledgeGraph};
use mistlink::pipeline::{calibrate_model, graph_features, predict_docs};
use mistlink::synthetic::{planted_corpus, PlantedSpec};
use mistlink::trainer::{train, TrainConfig};
use mistlink::{ModelKind, Mode};

fn main() -> mistlink::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(7, |s| s.parse().unwrap());
    let corpus = planted_corpus(&PlantedSpec::default(), seed);
    let split = split_judgments(&corpus.judgments, 0.625, 0.125, 13)?;
    let mist_ids: Vec<String> = corpus.mists.iter().map(|m| m.id.clone()).collect();
    let mut graph = MisinfoKnowledgeGraph::seed_fcgs(&mist_ids, &split.dev)?;
    graph.phase1_extend(&split.train)?;

    let encoder = FeatureEncoder::hashed(4096);
    let features = graph_features(&encoder, &graph, &corpus.tweets, &corpus.mists)?;
    let test_ids: BTreeSet<&str> = split.test.iter().map(|j| j.tweet_id.as_str()).collect();
    let test_docs: Vec<TweetDoc> = corpus
        .tweets
        .iter()
        .filter(|d| test_ids.contains(d.id.as_str()))
        .cloned()
        .collect();

    println!("{:<8} {:>10} {:>10} {:>8} {:>8}", "model", "loss0", "lossN", "F1 all", "F1 proto");
    for kind in ModelKind::ALL {
        let (mut model, report) = train(&graph, &features, encoder.spec(), kind, &TrainConfig::default())?;
        calibrate_model(&mut model, &graph, &features, &split.dev)?;
        let mut f1 = Vec::new();
        for mode in [Mode::All, Mode::Prototypical] {
            let preds = predict_docs(&model, &test_docs, mode)?;
            f1.push(100.0 * micro_prf(&count(&preds, &split.test)?).f1);
        }
        let first = report.epoch_losses.first().copied().unwrap_or(f64::NAN);
        let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!("{:<8} {first:>10.4} {last:>10.4} {:>8.1} {:>8.1}", kind.name(), f1[0], f1[1]);
    }
    Ok(())
}
