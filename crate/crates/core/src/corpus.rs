//! Document, target and judgment records, JSONL ingestion, and MinHash
//! near-duplicate removal over term trigrams.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{seeded_hash, tokenize, SplitMix64};

pub const DEFAULT_PERMUTATIONS: usize = 100;
pub const DEFAULT_DEDUP_THRESHOLD: f64 = 0.5;

/// A short document. `url_title`, when present, is appended to the text for
/// every downstream computation (see [`TweetDoc::content`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetDoc {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url_title: Option<String>,
}

impl TweetDoc {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            url_title: None,
        }
    }

    /// Text as seen by the pipeline: `text + " URL: " + url_title`.
    pub fn content(&self) -> String {
        match &self.url_title {
            Some(title) => format!("{} URL: {}", self.text, title),
            None => self.text.clone(),
        }
    }
}

/// A misinformation target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisTarget {
    pub id: String,
    #[serde(rename = "text")]
    pub description: String,
}

impl MisTarget {
    pub fn new(id: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgment {
    pub tweet_id: String,
    pub mist_id: String,
    pub relevant: bool,
}

impl RelevanceJudgment {
    pub fn new(tweet_id: impl Into<String>, mist_id: impl Into<String>, relevant: bool) -> Self {
        Self {
            tweet_id: tweet_id.into(),
            mist_id: mist_id.into(),
            relevant,
        }
    }
}

/// Read one JSON object per line. Blank lines are skipped; a malformed line
/// aborts with the file name and 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::InvalidData(format!("serialize {}: {e}", path.display())))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn validate_docs(docs: &[TweetDoc]) -> Result<()> {
    let mut seen = HashSet::new();
    for doc in docs {
        if doc.id.is_empty() {
            return Err(Error::InvalidData("document with empty id".into()));
        }
        if doc.text.trim().is_empty() {
            return Err(Error::InvalidData(format!("document {} has empty text", doc.id)));
        }
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::InvalidData(format!("duplicate document id {}", doc.id)));
        }
    }
    Ok(())
}

pub fn validate_mists(mists: &[MisTarget]) -> Result<()> {
    let mut seen = HashSet::new();
    for m in mists {
        if m.id.is_empty() {
            return Err(Error::InvalidData("target with empty id".into()));
        }
        if m.description.trim().is_empty() {
            return Err(Error::InvalidData(format!("target {} has empty description", m.id)));
        }
        if !seen.insert(m.id.as_str()) {
            return Err(Error::InvalidData(format!("duplicate target id {}", m.id)));
        }
    }
    Ok(())
}

/// Checks pair uniqueness, and id resolution for whichever corpora are given.
pub fn validate_judgments(
    judgments: &[RelevanceJudgment],
    docs: Option<&[TweetDoc]>,
    mists: Option<&[MisTarget]>,
) -> Result<()> {
    let doc_ids: Option<HashSet<&str>> = docs.map(|d| d.iter().map(|d| d.id.as_str()).collect());
    let mist_ids: Option<HashSet<&str>> =
        mists.map(|m| m.iter().map(|m| m.id.as_str()).collect());
    let mut pairs = HashSet::new();
    for j in judgments {
        if !pairs.insert((j.tweet_id.as_str(), j.mist_id.as_str())) {
            return Err(Error::InvalidData(format!(
                "duplicate judgment for ({}, {})",
                j.tweet_id, j.mist_id
            )));
        }
        if let Some(ids) = &doc_ids {
            if !ids.contains(j.tweet_id.as_str()) {
                return Err(Error::UnknownDocument(j.tweet_id.clone()));
            }
        }
        if let Some(ids) = &mist_ids {
            if !ids.contains(j.mist_id.as_str()) {
                return Err(Error::InvalidData(format!("unknown target {}", j.mist_id)));
            }
        }
    }
    Ok(())
}

/// Term-trigram shingles. Texts with fewer than three tokens fall back to
/// their individual tokens.
pub fn shingle(text: &str) -> BTreeSet<String> {
    let tokens = tokenize(text);
    if tokens.len() < 3 {
        return tokens.into_iter().collect();
    }
    tokens.windows(3).map(|w| w.join(" ")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub values: Vec<u64>,
}

impl MinHashSignature {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Fraction of agreeing positions; 0 for signatures of different length.
    pub fn jaccard(&self, other: &Self) -> f64 {
        if self.values.len() != other.values.len() || self.values.is_empty() {
            return 0.0;
        }
        let agree = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a == b)
            .count();
        agree as f64 / self.values.len() as f64
    }
}

/// A family of seeded 64-bit permutations `x -> mix(a*x + b)` with `a` odd.
#[derive(Debug, Clone)]
pub struct MinHasher {
    seed: u64,
    params: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(permutations: usize, seed: u64) -> Self {
        let mut gen = SplitMix64::new(seed);
        let params = (0..permutations)
            .map(|_| (gen.next_u64() | 1, gen.next_u64()))
            .collect();
        Self { seed, params }
    }

    pub fn permutations(&self) -> usize {
        self.params.len()
    }

    pub fn signature(&self, shingles: &BTreeSet<String>) -> Result<MinHashSignature> {
        if shingles.is_empty() {
            return Err(Error::EmptyDocument);
        }
        let base: Vec<u64> = shingles.iter().map(|s| seeded_hash(s, self.seed)).collect();
        let values = self
            .params
            .iter()
            .map(|&(a, b)| {
                base.iter()
                    .map(|&x| crate::text::mix64(a.wrapping_mul(x).wrapping_add(b)))
                    .min()
                    .expect("non-empty shingle set")
            })
            .collect();
        Ok(MinHashSignature { values })
    }
}

/// Signature with the default 100 permutations.
pub fn minhash(shingles: &BTreeSet<String>, seed: u64) -> Result<MinHashSignature> {
    MinHasher::new(DEFAULT_PERMUTATIONS, seed).signature(shingles)
}

/// Greedy near-duplicate removal. A document is dropped when its estimated
/// Jaccard similarity with any already retained document reaches `threshold`.
/// Documents without shingles are kept unless their text exactly repeats a
/// retained shingle-less document.
pub fn dedup_corpus(docs: &[TweetDoc], threshold: f64, hasher: &MinHasher) -> Result<Vec<TweetDoc>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Config(format!("dedup threshold {threshold} not in (0,1]")));
    }
    let mut retained: Vec<TweetDoc> = Vec::new();
    let mut signatures: Vec<MinHashSignature> = Vec::new();
    let mut bare_texts: HashSet<String> = HashSet::new();
    for doc in docs {
        let content = doc.content();
        let shingles = shingle(&content);
        if shingles.is_empty() {
            if bare_texts.insert(content) {
                retained.push(doc.clone());
            }
            continue;
        }
        let sig = hasher.signature(&shingles)?;
        if signatures.iter().any(|s| s.jaccard(&sig) >= threshold) {
            log::debug!("dedup: dropping {}", doc.id);
            continue;
        }
        signatures.push(sig);
        retained.push(doc.clone());
    }
    log::info!("dedup: kept {} of {} documents", retained.len(), docs.len());
    Ok(retained)
}
