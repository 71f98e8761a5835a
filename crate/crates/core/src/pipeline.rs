//! File-level stage functions and the end-to-end runner.
//!
//! Stages: dedup → index → retrieve → split → build-graph → train →
//! calibrate → predict → eval. Each stage reads and writes files under the
//! run directory, so any stage can be rerun alone and completed stages are
//! skipped on rerun.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline_bc::{bc_predict, bc_prob, bc_train, calibrate_bc, BcExample, BcModel};
use crate::corpus::{
    dedup_corpus, read_jsonl, validate_docs, validate_judgments, validate_mists, write_jsonl, MinHasher, MisTarget,
    RelevanceJudgment, TweetDoc, DEFAULT_DEDUP_THRESHOLD, DEFAULT_PERMUTATIONS,
};
use crate::encoder::{EncoderSpec, FeatureEncoder, FeatureStore};
use crate::error::{Error, Result};
use crate::eval::{build_report, count, MetricReport};
use crate::kge::ModelKind;
use crate::mkg::{split_judgments, DataSplit, MisinfoKnowledgeGraph};
use crate::model::KgeModel;
use crate::predictor::{calibrate, dev_scores, LinkIndex, LinkPredictor, Mode, Prediction};
use crate::retrieval::{build_index, retrieve_all, Bm25Params, DEFAULT_K};
use crate::trainer::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub tweets: PathBuf,
    pub mists: PathBuf,
    pub judgments: PathBuf,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            tweets: "tweets.jsonl".into(),
            mists: "mists.jsonl".into(),
            judgments: "judgments.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub permutations: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: DEFAULT_DEDUP_THRESHOLD,
            permutations: DEFAULT_PERMUTATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub k1: f64,
    pub b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self {
            k: DEFAULT_K,
            k1: p.k1,
            b: p.b,
        }
    }
}

impl RetrievalConfig {
    pub fn params(&self) -> Bm25Params {
        Bm25Params { k1: self.k1, b: self.b }
    }
}

/// Fractions of tweets assigned to train and dev; the rest is test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub dev: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { train: 0.625, dev: 0.125 }
    }
}

/// One TOML file drives a whole run. Relative paths resolve against the
/// directory of the config file. The top-level `seed` overrides `train.seed`
/// and seeds dedup and the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    pub dedup: DedupConfig,
    pub retrieval: RetrievalConfig,
    pub split: SplitConfig,
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 13,
            model: ModelKind::TransMS,
            mode: Mode::Prototypical,
            out_dir: "run".into(),
            inputs: InputPaths::default(),
            dedup: DedupConfig::default(),
            retrieval: RetrievalConfig::default(),
            split: SplitConfig::default(),
            encoder: EncoderSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Resolve relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        rebase(base, &mut self.out_dir);
        rebase(base, &mut self.inputs.tweets);
        rebase(base, &mut self.inputs.mists);
        rebase(base, &mut self.inputs.judgments);
        if let EncoderSpec::Precomputed { path, .. } = &mut self.encoder {
            rebase(base, path);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_train().validate()?;
        if self.retrieval.k == 0 {
            return Err(Error::Config("retrieval.k must be positive".into()));
        }
        if self.dedup.permutations == 0 {
            return Err(Error::Config("dedup.permutations must be positive".into()));
        }
        Ok(())
    }

    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn dedup_path(&self) -> PathBuf {
        self.out("tweets.dedup.jsonl")
    }
    pub fn index_path(&self) -> PathBuf {
        self.out("index.json")
    }
    pub fn candidates_path(&self) -> PathBuf {
        self.out("candidates.jsonl")
    }
    pub fn split_path(&self, part: &str) -> PathBuf {
        self.out(&format!("{part}.jsonl"))
    }
    pub fn test_tweets_path(&self) -> PathBuf {
        self.out("test_tweets.jsonl")
    }
    pub fn graph_path(&self) -> PathBuf {
        self.out("graph.json")
    }
    pub fn trained_model_path(&self) -> PathBuf {
        self.out(&format!("model-{}.trained.bin", self.model))
    }
    pub fn model_path(&self) -> PathBuf {
        self.out(&format!("model-{}.bin", self.model))
    }
    pub fn predictions_path(&self) -> PathBuf {
        self.out(&format!("predictions-{}-{}.jsonl", self.model, self.mode))
    }
    pub fn report_path(&self) -> PathBuf {
        self.out(&format!("report-{}-{}.json", self.model, self.mode))
    }
    pub fn manifest_path(&self) -> PathBuf {
        self.out(&format!("manifest-{}-{}.json", self.model, self.mode))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidData(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn read_tweets(path: impl AsRef<Path>) -> Result<Vec<TweetDoc>> {
    let docs: Vec<TweetDoc> = read_jsonl(path)?;
    validate_docs(&docs)?;
    Ok(docs)
}

pub fn read_mists(path: impl AsRef<Path>) -> Result<Vec<MisTarget>> {
    let mists: Vec<MisTarget> = read_jsonl(path)?;
    validate_mists(&mists)?;
    Ok(mists)
}

pub fn read_judgments(path: impl AsRef<Path>) -> Result<Vec<RelevanceJudgment>> {
    let j: Vec<RelevanceJudgment> = read_jsonl(path)?;
    validate_judgments(&j, None, None)?;
    Ok(j)
}

// ---- stages ----

/// Returns `(input count, retained count)`.
pub fn dedup_file(input: &Path, output: &Path, cfg: &DedupConfig, seed: u64) -> Result<(usize, usize)> {
    let docs = read_tweets(input)?;
    let kept = if cfg.enabled {
        dedup_corpus(&docs, cfg.threshold, &MinHasher::new(cfg.permutations, seed))?
    } else {
        docs.clone()
    };
    write_jsonl(output, &kept)?;
    Ok((docs.len(), kept.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub documents: usize,
    pub vocabulary: usize,
    pub avg_doc_length: f64,
}

pub fn index_file(tweets: &Path, output: &Path) -> Result<IndexStats> {
    let index = build_index(&read_tweets(tweets)?)?;
    let stats = IndexStats {
        documents: index.doc_count(),
        vocabulary: index.vocabulary_size(),
        avg_doc_length: index.avg_doc_length(),
    };
    write_json(output, &stats)?;
    Ok(stats)
}

/// Writes the pooled BM25 candidates of every target; returns their count.
pub fn retrieve_file(tweets: &Path, mists: &Path, output: &Path, cfg: &RetrievalConfig) -> Result<usize> {
    let index = build_index(&read_tweets(tweets)?)?;
    let cands = retrieve_all(&index, &read_mists(mists)?, cfg.k, cfg.params());
    write_jsonl(output, &cands)?;
    Ok(cands.len())
}

/// Split the judgments of tweets that survived dedup. Also writes the test
/// tweets' documents for the predict stage.
pub fn split_file(
    judgments: &Path,
    tweets: &Path,
    mists: &Path,
    out_dir: &Path,
    cfg: &SplitConfig,
    seed: u64,
) -> Result<DataSplit> {
    let docs = read_tweets(tweets)?;
    let mists = read_mists(mists)?;
    let all = read_judgments(judgments)?;
    let kept: HashSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let judgments: Vec<RelevanceJudgment> = all.into_iter().filter(|j| kept.contains(j.tweet_id.as_str())).collect();
    validate_judgments(&judgments, Some(&docs), Some(&mists))?;
    let split = split_judgments(&judgments, cfg.train, cfg.dev, seed)?;
    split.validate()?;
    write_jsonl(out_dir.join("train.jsonl"), &split.train)?;
    write_jsonl(out_dir.join("dev.jsonl"), &split.dev)?;
    write_jsonl(out_dir.join("test.jsonl"), &split.test)?;
    let test_ids: HashSet<&str> = split.test.iter().map(|j| j.tweet_id.as_str()).collect();
    let test_docs: Vec<&TweetDoc> = docs.iter().filter(|d| test_ids.contains(d.id.as_str())).collect();
    write_jsonl(out_dir.join("test_tweets.jsonl"), &test_docs)?;
    Ok(split)
}

/// Seed FCGs from dev, extend with train (Phase 1), save.
/// Without a target file the relation vocabulary is every target named in
/// the judgments, sorted.
pub fn build_graph_file(
    mists: Option<&Path>,
    train: &Path,
    dev: &Path,
    output: &Path,
) -> Result<MisinfoKnowledgeGraph> {
    let (train, dev) = (read_judgments(train)?, read_judgments(dev)?);
    let mists: Vec<String> = match mists {
        Some(p) => read_mists(p)?.into_iter().map(|m| m.id).collect(),
        None => {
            let ids: std::collections::BTreeSet<&str> = train.iter().chain(&dev).map(|j| j.mist_id.as_str()).collect();
            ids.into_iter().map(String::from).collect()
        }
    };
    let mut graph = MisinfoKnowledgeGraph::seed_fcgs(&mists, &dev)?;
    let stats = graph.phase1_extend(&train)?;
    log::info!(
        "graph: {} nodes, {} edges, {} unconnected training tweets",
        graph.node_count(),
        graph.total_edges(),
        stats.unconnected
    );
    graph.save(output)?;
    Ok(graph)
}

/// Encode the given tweets and all targets.
pub fn build_features<'a>(
    encoder: &FeatureEncoder,
    tweets: impl IntoIterator<Item = &'a TweetDoc>,
    mists: &[MisTarget],
) -> Result<FeatureStore> {
    let mut store = FeatureStore::default();
    for d in tweets {
        store.tweets.insert(d.id.clone(), encoder.encode(&d.id, &d.content())?);
    }
    for m in mists {
        store.mists.insert(m.id.clone(), encoder.encode(&m.id, &m.description)?);
    }
    Ok(store)
}

/// Features for every graph node and every target.
pub fn graph_features(
    encoder: &FeatureEncoder,
    graph: &MisinfoKnowledgeGraph,
    tweets: &[TweetDoc],
    mists: &[MisTarget],
) -> Result<FeatureStore> {
    let by_id: HashMap<&str, &TweetDoc> = tweets.iter().map(|d| (d.id.as_str(), d)).collect();
    let nodes = graph
        .nodes()
        .map(|t| by_id.get(t).copied().ok_or_else(|| Error::UnknownDocument(t.to_string())))
        .collect::<Result<Vec<_>>>()?;
    build_features(encoder, nodes, mists)
}

pub fn train_file(
    graph: &Path,
    tweets: &Path,
    mists: &Path,
    encoder: &EncoderSpec,
    kind: ModelKind,
    config: &TrainConfig,
    output: &Path,
) -> Result<TrainReport> {
    let graph = MisinfoKnowledgeGraph::load(graph)?;
    let enc = FeatureEncoder::from_spec(encoder)?;
    let features = graph_features(&enc, &graph, &read_tweets(tweets)?, &read_mists(mists)?)?;
    let (model, report) = train(&graph, &features, enc.spec(), kind, config)?;
    model.save(output)?;
    Ok(report)
}

/// Freeze the link index and calibrate thresholds for both modes on dev.
pub fn calibrate_model(
    model: &mut KgeModel,
    graph: &MisinfoKnowledgeGraph,
    features: &FeatureStore,
    dev: &[RelevanceJudgment],
) -> Result<()> {
    let index = LinkIndex::build(model, graph, features)?;
    let mut embeddings = HashMap::new();
    for j in dev {
        if !embeddings.contains_key(&j.tweet_id) {
            let te = model.tweet_embedding(features.tweet(&j.tweet_id)?)?;
            embeddings.insert(j.tweet_id.clone(), te);
        }
    }
    let mut tables = BTreeMap::new();
    {
        let predictor = LinkPredictor::new(model, &index)?;
        for mode in [Mode::All, Mode::Prototypical] {
            let scores = dev_scores(&predictor, dev, &embeddings, mode)?;
            let table = calibrate(&scores);
            table.validate(graph, mode)?;
            tables.insert(mode, table);
        }
    }
    model.thresholds = tables;
    model.index = Some(index);
    Ok(())
}

pub fn calibrate_file(
    model_in: &Path,
    graph: &Path,
    tweets: &Path,
    mists: &Path,
    dev: &Path,
    output: &Path,
) -> Result<()> {
    let mut model = KgeModel::load(model_in)?;
    let graph = MisinfoKnowledgeGraph::load(graph)?;
    let enc = FeatureEncoder::from_spec(&model.encoder)?;
    let features = graph_features(&enc, &graph, &read_tweets(tweets)?, &read_mists(mists)?)?;
    calibrate_model(&mut model, &graph, &features, &read_judgments(dev)?)?;
    model.save(output)
}

/// Predict links for each document with a calibrated model.
pub fn predict_docs(model: &KgeModel, docs: &[TweetDoc], mode: Mode) -> Result<Vec<Prediction>> {
    let table = model
        .thresholds
        .get(&mode)
        .ok_or_else(|| Error::ModelFormat(format!("model has no {mode} thresholds; run calibrate")))?;
    let predictor = LinkPredictor::from_model(model)?;
    let enc = FeatureEncoder::from_spec(&model.encoder)?;
    docs.iter()
        .map(|d| {
            let te = model.tweet_embedding(&enc.encode(&d.id, &d.content())?)?;
            predictor.predict(mode, &d.id, &te, table)
        })
        .collect()
}

pub fn predict_file(model: &Path, tweets: &Path, mode: Mode, output: &Path) -> Result<Vec<Prediction>> {
    let model = KgeModel::load(model)?;
    let preds = predict_docs(&model, &read_tweets(tweets)?, mode)?;
    write_jsonl(output, &preds)?;
    Ok(preds)
}

pub fn eval_file(pred: &Path, gold: &Path, graph: &Path, output: &Path) -> Result<MetricReport> {
    let preds: Vec<Prediction> = read_jsonl(pred)?;
    let counts = count(&preds, &read_judgments(gold)?)?;
    let report = build_report(&counts, &MisinfoKnowledgeGraph::load(graph)?);
    write_json(output, &report)?;
    Ok(report)
}

/// Train the binary baseline on `train` judgments and calibrate its
/// threshold over every (dev tweet, target) pair.
pub fn train_bc_model(
    train: &[RelevanceJudgment],
    dev: &[RelevanceJudgment],
    tweets: &[TweetDoc],
    mists: &[MisTarget],
    encoder: &EncoderSpec,
    config: &TrainConfig,
) -> Result<BcModel> {
    let enc = FeatureEncoder::from_spec(encoder)?;
    let needed: HashSet<&str> = train.iter().chain(dev).map(|j| j.tweet_id.as_str()).collect();
    let features = build_features(&enc, tweets.iter().filter(|d| needed.contains(d.id.as_str())), mists)?;
    let examples: Vec<BcExample> = train.iter().map(BcExample::from).collect();
    let mut model = bc_train(&examples, &features, enc.spec(), enc.dim(), config)?;
    let gold: HashSet<(&str, &str)> = dev
        .iter()
        .filter(|j| j.relevant)
        .map(|j| (j.tweet_id.as_str(), j.mist_id.as_str()))
        .collect();
    let dev_tweets: std::collections::BTreeSet<&str> = dev.iter().map(|j| j.tweet_id.as_str()).collect();
    let mut scored = Vec::new();
    for t in dev_tweets {
        for m in mists {
            let p = bc_prob(&model, features.tweet(t)?, features.mist(&m.id)?)?;
            scored.push((p, gold.contains(&(t, m.id.as_str()))));
        }
    }
    let (threshold, f1) = calibrate_bc(&scored);
    log::info!("train-bc: threshold {threshold} (dev F1 {f1:.4})");
    model.threshold = threshold;
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
pub fn train_bc_file(
    train: &Path,
    dev: &Path,
    tweets: &Path,
    mists: &Path,
    encoder: &EncoderSpec,
    config: &TrainConfig,
    output: &Path,
) -> Result<BcModel> {
    let model = train_bc_model(
        &read_judgments(train)?,
        &read_judgments(dev)?,
        &read_tweets(tweets)?,
        &read_mists(mists)?,
        encoder,
        config,
    )?;
    model.save(output)?;
    Ok(model)
}

pub fn predict_bc_docs(model: &BcModel, docs: &[TweetDoc], mists: &[MisTarget]) -> Result<Vec<Prediction>> {
    let enc = FeatureEncoder::from_spec(&model.encoder)?;
    let mist_features = mists
        .iter()
        .map(|m| Ok((m.id.clone(), enc.encode(&m.id, &m.description)?)))
        .collect::<Result<Vec<_>>>()?;
    docs.iter()
        .map(|d| bc_predict(model, &d.id, &enc.encode(&d.id, &d.content())?, &mist_features))
        .collect()
}

pub fn predict_bc_file(model: &Path, tweets: &Path, mists: &Path, output: &Path) -> Result<Vec<Prediction>> {
    let model = BcModel::load(model)?;
    let preds = predict_bc_docs(&model, &read_tweets(tweets)?, &read_mists(mists)?)?;
    write_jsonl(output, &preds)?;
    Ok(preds)
}

// ---- runner ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Dedup,
    Index,
    Retrieve,
    Split,
    BuildGraph,
    Train,
    Calibrate,
    Predict,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Dedup,
        Stage::Index,
        Stage::Retrieve,
        Stage::Split,
        Stage::BuildGraph,
        Stage::Train,
        Stage::Calibrate,
        Stage::Predict,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Dedup => "dedup",
            Stage::Index => "index",
            Stage::Retrieve => "retrieve",
            Stage::Split => "split",
            Stage::BuildGraph => "build-graph",
            Stage::Train => "train",
            Stage::Calibrate => "calibrate",
            Stage::Predict => "predict",
            Stage::Eval => "eval",
        }
    }

    pub fn outputs(self, cfg: &PipelineConfig) -> Vec<PathBuf> {
        match self {
            Stage::Dedup => vec![cfg.dedup_path()],
            Stage::Index => vec![cfg.index_path()],
            Stage::Retrieve => vec![cfg.candidates_path()],
            Stage::Split => vec![
                cfg.split_path("train"),
                cfg.split_path("dev"),
                cfg.split_path("test"),
                cfg.test_tweets_path(),
            ],
            Stage::BuildGraph => vec![cfg.graph_path()],
            Stage::Train => vec![cfg.trained_model_path()],
            Stage::Calibrate => vec![cfg.model_path()],
            Stage::Predict => vec![cfg.predictions_path()],
            Stage::Eval => vec![cfg.report_path()],
        }
    }

    fn run(self, cfg: &PipelineConfig) -> Result<()> {
        let tweets = cfg.dedup_path();
        match self {
            Stage::Dedup => dedup_file(&cfg.inputs.tweets, &tweets, &cfg.dedup, cfg.seed).map(drop),
            Stage::Index => index_file(&tweets, &cfg.index_path()).map(drop),
            Stage::Retrieve => {
                retrieve_file(&tweets, &cfg.inputs.mists, &cfg.candidates_path(), &cfg.retrieval).map(drop)
            }
            Stage::Split => split_file(
                &cfg.inputs.judgments,
                &tweets,
                &cfg.inputs.mists,
                &cfg.out_dir,
                &cfg.split,
                cfg.seed,
            )
            .map(drop),
            Stage::BuildGraph => build_graph_file(
                Some(&cfg.inputs.mists),
                &cfg.split_path("train"),
                &cfg.split_path("dev"),
                &cfg.graph_path(),
            )
            .map(drop),
            Stage::Train => train_file(
                &cfg.graph_path(),
                &tweets,
                &cfg.inputs.mists,
                &cfg.encoder,
                cfg.model,
                &cfg.effective_train(),
                &cfg.trained_model_path(),
            )
            .map(drop),
            Stage::Calibrate => calibrate_file(
                &cfg.trained_model_path(),
                &cfg.graph_path(),
                &tweets,
                &cfg.inputs.mists,
                &cfg.split_path("dev"),
                &cfg.model_path(),
            ),
            Stage::Predict => {
                predict_file(&cfg.model_path(), &cfg.test_tweets_path(), cfg.mode, &cfg.predictions_path()).map(drop)
            }
            Stage::Eval => eval_file(
                &cfg.predictions_path(),
                &cfg.split_path("test"),
                &cfg.graph_path(),
                &cfg.report_path(),
            )
            .map(drop),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub skipped: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub model: ModelKind,
    pub mode: Mode,
    pub stages: Vec<StageRecord>,
    pub metrics: Option<MetricSummary>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

/// Run every stage in order, skipping stages whose outputs all exist unless
/// `force`. The manifest is rewritten only if some stage actually ran.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let mut records = Vec::new();
    for stage in Stage::ALL {
        let done = stage.outputs(cfg).iter().all(|p| p.exists());
        if done && !force {
            log::info!("{}: outputs present, skipping", stage.name());
            records.push(StageRecord {
                stage,
                skipped: true,
                seconds: 0.0,
            });
            continue;
        }
        let t0 = Instant::now();
        stage.run(cfg).map_err(|e| Error::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        })?;
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("{}: done in {seconds:.2}s", stage.name());
        records.push(StageRecord {
            stage,
            skipped: false,
            seconds,
        });
    }
    let manifest_path = cfg.manifest_path();
    if records.iter().all(|r| r.skipped) && manifest_path.exists() {
        return Manifest::load(&manifest_path);
    }
    let report: MetricReport = read_json(&cfg.report_path())?;
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        model: cfg.model,
        mode: cfg.mode,
        stages: records,
        metrics: Some(MetricSummary {
            precision: report.precision,
            recall: report.recall,
            f1: report.f1,
        }),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_and_overrides() {
        let cfg = PipelineConfig::from_toml("seed = 7\nmodel = \"transe\"\nmode = \"all\"\n[train]\nepochs = 2\n").unwrap();
        assert_eq!(cfg.model, ModelKind::TransE);
        assert_eq!(cfg.mode, Mode::All);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.effective_train().seed, 7);
        assert_eq!(cfg.retrieval.k, 200);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn config_round_trips() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }
}
