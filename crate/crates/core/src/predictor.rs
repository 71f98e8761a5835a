//! Link prediction for unconnected tweets and per-target threshold
//! calibration.
//!
//! * `All` (Condition_ALL): score the tweet against every member of FCG(x)
//!   and predict x when at least `N_x` scores exceed `T_x`.
//! * `Prototypical`: score the tweet once against the mean member embedding
//!   and predict x when the score exceeds `T_x`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::corpus::RelevanceJudgment;
use crate::encoder::FeatureStore;
use crate::error::{check_dim, Error, Result};
use crate::kge::ModelKind;
use crate::mkg::MisinfoKnowledgeGraph;
use crate::model::KgeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    All,
    Prototypical,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::All => "all",
            Mode::Prototypical => "prototypical",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(Mode::All),
            "prototypical" | "proto" => Ok(Mode::Prototypical),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// JSON has no infinities; they are written as the strings `"inf"`/`"-inf"`.
mod extended_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            Err(serde::ser::Error::custom("NaN threshold"))
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("bad threshold {other:?}"))),
            },
        }
    }
}

/// `(T_x, N_x)` for one target. `N_x` is always 1 in prototypical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    #[serde(with = "extended_float")]
    pub t: f64,
    pub n: usize,
}

impl Threshold {
    pub const NEVER: Threshold = Threshold {
        t: f64::INFINITY,
        n: 1,
    };
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    pub entries: BTreeMap<String, Threshold>,
}

impl ThresholdTable {
    pub fn get(&self, mist: &str) -> Option<Threshold> {
        self.entries.get(mist).copied()
    }

    pub fn insert(&mut self, mist: impl Into<String>, threshold: Threshold) {
        self.entries.insert(mist.into(), threshold);
    }

    /// Every non-empty FCG has an entry, and `1 ≤ N_x ≤ |FCG(x)|`.
    pub fn validate(&self, graph: &MisinfoKnowledgeGraph, mode: Mode) -> Result<()> {
        for m in graph.mists() {
            let size = graph.fcg_size(m);
            if size == 0 {
                continue;
            }
            let th = self
                .get(m)
                .ok_or_else(|| Error::InvalidData(format!("threshold table misses target {m}")))?;
            let max_n = if mode == Mode::All { size } else { 1 };
            if th.n == 0 || th.n > max_n || th.t.is_nan() {
                return Err(Error::InvalidData(format!("invalid threshold for {m}: {th:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub tweet_id: String,
    pub mists: Vec<String>,
}

impl Prediction {
    pub fn new(tweet_id: impl Into<String>, mists: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let set: BTreeSet<String> = mists.into_iter().map(Into::into).collect();
        Self {
            tweet_id: tweet_id.into(),
            mists: set.into_iter().collect(),
        }
    }
}

/// Arithmetic mean of a non-empty set of equally sized embeddings.
pub fn mean_embedding(embeddings: &[&[f64]]) -> Option<Vec<f64>> {
    let first = embeddings.first()?;
    let mut acc = vec![0.0; first.len()];
    for e in embeddings {
        if e.len() != acc.len() {
            return None;
        }
        acc.iter_mut().zip(e.iter()).for_each(|(a, b)| *a += b);
    }
    let n = embeddings.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}

/// Prototype of FCG(`mist`): the mean tweet embedding of its members.
pub fn compute_prototype(
    graph: &MisinfoKnowledgeGraph,
    model: &KgeModel,
    features: &FeatureStore,
    mist: &str,
) -> Result<Vec<f64>> {
    let members = graph.members(mist);
    if members.is_empty() {
        return Err(Error::EmptyFcg(mist.to_string()));
    }
    let embeddings = members
        .iter()
        .map(|t| model.tweet_embedding(features.tweet(t)?))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = embeddings.iter().map(Vec::as_slice).collect();
    Ok(mean_embedding(&refs).expect("non-empty, equal dims"))
}

/// Frozen per-target state used at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedMist {
    pub embedding: Vec<f64>,
    pub members: Vec<String>,
    pub member_embeddings: Vec<Vec<f64>>,
    pub prototype: Option<Vec<f64>>,
}

/// Target embeddings, member embeddings and prototypes, computed once from
/// the post-Phase-1 graph and never updated by prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkIndex {
    pub kind: ModelKind,
    pub mists: BTreeMap<String, IndexedMist>,
}

impl LinkIndex {
    pub fn build(model: &KgeModel, graph: &MisinfoKnowledgeGraph, features: &FeatureStore) -> Result<Self> {
        let mut mists = BTreeMap::new();
        for m in graph.mists() {
            let embedding = model.mist_embedding(features.mist(m)?)?;
            let members: Vec<String> = graph.members(m).to_vec();
            let member_embeddings = members
                .iter()
                .map(|t| model.tweet_embedding(features.tweet(t)?))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&[f64]> = member_embeddings.iter().map(Vec::as_slice).collect();
            let prototype = mean_embedding(&refs);
            mists.insert(
                m.clone(),
                IndexedMist {
                    embedding,
                    members,
                    member_embeddings,
                    prototype,
                },
            );
        }
        Ok(Self { kind: model.kind, mists })
    }

    pub fn fcg_size(&self, mist: &str) -> usize {
        self.mists.get(mist).map_or(0, |m| m.members.len())
    }
}

/// Scores tweets against a [`LinkIndex`], counting score evaluations.
pub struct LinkPredictor<'a> {
    model: &'a KgeModel,
    index: &'a LinkIndex,
    evaluations: AtomicU64,
}

impl<'a> LinkPredictor<'a> {
    pub fn new(model: &'a KgeModel, index: &'a LinkIndex) -> Result<Self> {
        if index.kind != model.kind {
            return Err(Error::InvalidData(format!(
                "index built for {} but model is {}",
                index.kind, model.kind
            )));
        }
        Ok(Self {
            model,
            index,
            evaluations: AtomicU64::new(0),
        })
    }

    /// Uses the index frozen into the model at calibration time.
    pub fn from_model(model: &'a KgeModel) -> Result<Self> {
        let index = model
            .index
            .as_ref()
            .ok_or_else(|| Error::ModelFormat("model has not been calibrated".into()))?;
        Self::new(model, index)
    }

    pub fn model(&self) -> &KgeModel {
        self.model
    }

    pub fn index(&self) -> &LinkIndex {
        self.index
    }

    /// Number of score function calls so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }

    fn score(&self, te: &[f64], mist: &IndexedMist, other: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.model
            .score(te, &mist.embedding, other)
            .expect("index embeddings match the model")
    }

    /// Scores of `te` against every member of FCG(`mist`), skipping `exclude`.
    pub fn member_scores(&self, te: &[f64], mist: &str, exclude: Option<&str>) -> Vec<f64> {
        let Some(entry) = self.index.mists.get(mist) else {
            return Vec::new();
        };
        entry
            .members
            .iter()
            .zip(&entry.member_embeddings)
            .filter(|(id, _)| Some(id.as_str()) != exclude)
            .map(|(_, e)| self.score(te, entry, e))
            .collect()
    }

    /// Score against the prototype of FCG(`mist`); `None` for an empty FCG.
    pub fn prototype_score(&self, te: &[f64], mist: &str) -> Option<f64> {
        let entry = self.index.mists.get(mist)?;
        let proto = entry.prototype.as_ref()?;
        Some(self.score(te, entry, proto))
    }

    pub fn predict_all(&self, tweet_id: &str, te: &[f64], table: &ThresholdTable) -> Result<Prediction> {
        check_dim(self.model.kind.tweet_dim(), te.len())?;
        let mut out = Vec::new();
        for (m, entry) in &self.index.mists {
            if entry.members.is_empty() {
                continue;
            }
            let Some(th) = table.get(m) else { continue };
            let above = entry
                .member_embeddings
                .iter()
                .filter(|e| self.score(te, entry, e) > th.t)
                .count();
            if above >= th.n {
                out.push(m.clone());
            }
        }
        Ok(Prediction::new(tweet_id, out))
    }

    pub fn predict_prototypical(&self, tweet_id: &str, te: &[f64], table: &ThresholdTable) -> Result<Prediction> {
        check_dim(self.model.kind.tweet_dim(), te.len())?;
        let mut out = Vec::new();
        for (m, entry) in &self.index.mists {
            let (Some(proto), Some(th)) = (&entry.prototype, table.get(m)) else {
                continue;
            };
            if self.score(te, entry, proto) > th.t {
                out.push(m.clone());
            }
        }
        Ok(Prediction::new(tweet_id, out))
    }

    pub fn predict(&self, mode: Mode, tweet_id: &str, te: &[f64], table: &ThresholdTable) -> Result<Prediction> {
        match mode {
            Mode::All => self.predict_all(tweet_id, te, table),
            Mode::Prototypical => self.predict_prototypical(tweet_id, te, table),
        }
    }
}

/// One dev tweet's scores against one target.
#[derive(Debug, Clone, PartialEq)]
pub struct DevRow {
    pub tweet_id: String,
    pub relevant: bool,
    /// Member scores (`All`, one per other member) or a single prototype
    /// score (`Prototypical`; empty if no prototype is available).
    pub scores: Vec<f64>,
}

/// Dev scores of every dev tweet against one target.
#[derive(Debug, Clone, PartialEq)]
pub struct MistDevScores {
    pub mist_id: String,
    /// Upper bound of the `N_x` search.
    pub max_n: usize,
    pub rows: Vec<DevRow>,
}

/// Leave-one-out dev scores: a dev tweet that is itself a member of FCG(x)
/// is never scored against itself, nor against a prototype that includes it.
pub fn dev_scores(
    predictor: &LinkPredictor<'_>,
    dev: &[RelevanceJudgment],
    embeddings: &HashMap<String, Vec<f64>>,
    mode: Mode,
) -> Result<Vec<MistDevScores>> {
    let tweets: BTreeSet<&str> = dev.iter().map(|j| j.tweet_id.as_str()).collect();
    let gold: BTreeSet<(&str, &str)> = dev
        .iter()
        .filter(|j| j.relevant)
        .map(|j| (j.tweet_id.as_str(), j.mist_id.as_str()))
        .collect();
    let mut out = Vec::new();
    for (m, entry) in &predictor.index.mists {
        let size = entry.members.len();
        if size == 0 {
            continue;
        }
        let mut rows = Vec::with_capacity(tweets.len());
        for &t in &tweets {
            let te = embeddings.get(t).ok_or_else(|| Error::UnknownDocument(t.to_string()))?;
            let member_at = entry.members.iter().position(|x| x == t);
            let scores = match mode {
                Mode::All => predictor.member_scores(te, m, Some(t)),
                Mode::Prototypical => match member_at {
                    None => predictor.prototype_score(te, m).into_iter().collect(),
                    Some(_) if size == 1 => Vec::new(),
                    Some(i) => {
                        let proto = entry.prototype.as_ref().expect("non-empty FCG");
                        let own = &entry.member_embeddings[i];
                        let n = size as f64;
                        let loo: Vec<f64> = proto
                            .iter()
                            .zip(own)
                            .map(|(p, e)| (n * p - e) / (n - 1.0))
                            .collect();
                        vec![predictor.score(te, entry, &loo)]
                    }
                },
            };
            rows.push(DevRow {
                tweet_id: t.to_string(),
                relevant: gold.contains(&(t, m.as_str())),
                scores,
            });
        }
        out.push(MistDevScores {
            mist_id: m.clone(),
            max_n: if mode == Mode::All { size } else { 1 },
            rows,
        });
    }
    Ok(out)
}

/// Outcome of calibrating one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub threshold: Threshold,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Candidate thresholds in descending order: `+∞`, midpoints between
/// consecutive distinct scores, `−∞`.
pub fn candidate_thresholds(scores: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut s: Vec<f64> = scores.into_iter().filter(|v| !v.is_nan()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.dedup();
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(f64::INFINITY);
    for w in s.windows(2) {
        out.push(w[1] + (w[0] - w[1]) / 2.0);
    }
    out.push(f64::NEG_INFINITY);
    out
}

fn f1_of(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Exhaustive search over `(T, N)`, `N ∈ 1..=max_n`, maximizing F1 on `rows`.
/// Ties go to the larger `T`, then the smaller `N`. Without any relevant row
/// the never-predict sentinel is returned.
pub fn calibrate_mist(rows: &[DevRow], max_n: usize) -> Calibration {
    let positives = rows.iter().filter(|r| r.relevant).count();
    if positives == 0 || max_n == 0 {
        return Calibration {
            threshold: Threshold::NEVER,
            f1: 0.0,
            tp: 0,
            fp: 0,
            fn_: positives,
        };
    }
    let sorted: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut s = r.scores.clone();
            s.sort_by(f64::total_cmp);
            s
        })
        .collect();
    let mut best = Calibration {
        threshold: Threshold::NEVER,
        f1: -1.0,
        tp: 0,
        fp: 0,
        fn_: positives,
    };
    let mut rel_hist = vec![0usize; max_n + 1];
    let mut non_hist = vec![0usize; max_n + 1];
    for t in candidate_thresholds(rows.iter().flat_map(|r| r.scores.iter().copied())) {
        rel_hist.iter_mut().for_each(|c| *c = 0);
        non_hist.iter_mut().for_each(|c| *c = 0);
        for (row, s) in rows.iter().zip(&sorted) {
            let above = (s.len() - s.partition_point(|&v| v <= t)).min(max_n);
            if row.relevant {
                rel_hist[above] += 1;
            } else {
                non_hist[above] += 1;
            }
        }
        // tp(N) = #relevant rows with count ≥ N, accumulated from the top.
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut per_n = vec![(0usize, 0usize); max_n + 1];
        for n in (1..=max_n).rev() {
            tp += rel_hist[n];
            fp += non_hist[n];
            per_n[n] = (tp, fp);
        }
        for (n, &(tp, fp)) in per_n.iter().enumerate().skip(1) {
            let f1 = f1_of(tp, fp, positives - tp);
            if f1 > best.f1 {
                best = Calibration {
                    threshold: Threshold { t, n },
                    f1,
                    tp,
                    fp,
                    fn_: positives - tp,
                };
            }
        }
    }
    best
}

/// Per-target calibration over precomputed dev scores.
pub fn calibrate(dev: &[MistDevScores]) -> ThresholdTable {
    let mut table = ThresholdTable::default();
    for d in dev {
        if !d.rows.iter().any(|r| r.relevant) {
            log::warn!("calibrate: {} has no relevant dev tweets; never predicted", d.mist_id);
        }
        let c = calibrate_mist(&d.rows, d.max_n);
        log::debug!(
            "calibrate: {} T={} N={} dev F1={:.4}",
            d.mist_id,
            c.threshold.t,
            c.threshold.n,
            c.f1
        );
        table.insert(d.mist_id.clone(), c.threshold);
    }
    table
}
