//! Train the pairwise binary-classification baseline on the planted corpus
//! and evaluate it on the test split.
//!
//! ```text
//! cargo run --release --example binary_baseline
//! ```

use std::collections::BTreeSet;

use mistlink::corpus::TweetDoc;
use mistlink::encoder::EncoderSpec;
use mistlink::eval::{count, micro_prf};
use mistlink::mkg::split_judgments;
use mistlink::pipeline::{predict_bc_docs, train_bc_model};
use mistlink::synthetic::{planted_corpus, PlantedSpec};
use mistlink::trainer::TrainConfig;

fn main() -> mistlink::Result<()> {
    let corpus = planted_corpus(&PlantedSpec::default(), 7);
    let split = split_judgments(&corpus.judgments, 0.625, 0.125, 13)?;
    let encoder = EncoderSpec::Hashed { dim: 2048, seed: 0 };
    let model = train_bc_model(&split.train, &split.dev, &corpus.tweets, &corpus.mists, &encoder, &TrainConfig::default())?;
    println!("loss by epoch: {:?}", model.loss_trace.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>());
    println!("calibrated threshold {:.4}", model.threshold);

    let test_ids: BTreeSet<&str> = split.test.iter().map(|j| j.tweet_id.as_str()).collect();
    let docs: Vec<TweetDoc> = corpus.tweets.iter().filter(|d| test_ids.contains(d.id.as_str())).cloned().collect();
    let preds = predict_bc_docs(&model, &docs, &corpus.mists)?;
    let m = micro_prf(&count(&preds, &split.test)?);
    println!("test P {:.3} R {:.3} F1 {:.3}", m.precision, m.recall, m.f1);
    Ok(())
}
