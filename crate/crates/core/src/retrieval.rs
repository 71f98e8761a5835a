//! BM25 over an in-memory inverted index, plus per-target candidate retrieval
//! that pools the original and the "coronavirus"-expanded query.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{MisTarget, TweetDoc};
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const DEFAULT_K: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: usize,
    pub tf: u32,
}

#[derive(Debug, Clone, Default)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<usize>,
    lookup: HashMap<String, usize>,
    total_length: usize,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index one document. Re-adding an existing id is rejected.
    pub fn add(&mut self, doc: &TweetDoc) -> Result<()> {
        if self.lookup.contains_key(&doc.id) {
            return Err(Error::InvalidData(format!("document {} already indexed", doc.id)));
        }
        let idx = self.doc_ids.len();
        let tokens = tokenize(&doc.content());
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        for (term, count) in tf {
            self.postings
                .entry(term.to_string())
                .or_default()
                .push(Posting { doc: idx, tf: count });
        }
        self.doc_ids.push(doc.id.clone());
        self.doc_lengths.push(tokens.len());
        self.lookup.insert(doc.id.clone(), idx);
        self.total_length += tokens.len();
        Ok(())
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_ids.is_empty() {
            0.0
        } else {
            self.total_length as f64 / self.doc_ids.len() as f64
        }
    }

    pub fn doc_length(&self, doc_id: &str) -> Option<usize> {
        self.lookup.get(doc_id).map(|&i| self.doc_lengths[i])
    }

    /// `(doc_id, tf)` pairs for a term, in insertion order.
    pub fn postings(&self, term: &str) -> Vec<(&str, u32)> {
        self.postings
            .get(term)
            .map(|list| list.iter().map(|p| (self.doc_ids[p.doc].as_str(), p.tf)).collect())
            .unwrap_or_default()
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.document_frequency(term) as f64;
        let total = self.doc_count() as f64;
        (1.0 + (total - n + 0.5) / (n + 0.5)).ln()
    }

    fn term_weight(&self, term: &str, tf: u32, doc: usize, params: Bm25Params) -> f64 {
        let tf = f64::from(tf);
        let len_norm = 1.0 - params.b + params.b * self.doc_lengths[doc] as f64 / self.avg_doc_length();
        self.idf(term) * tf * (params.k1 + 1.0) / (tf + params.k1 * len_norm)
    }

    /// BM25 of one document. Repeated query terms contribute once per occurrence.
    pub fn bm25_score(&self, query_terms: &[String], doc_id: &str, params: Bm25Params) -> Result<f64> {
        let doc = *self
            .lookup
            .get(doc_id)
            .ok_or_else(|| Error::UnknownDocument(doc_id.to_string()))?;
        let mut score = 0.0;
        for term in query_terms {
            let Some(list) = self.postings.get(term) else { continue };
            if let Some(p) = list.iter().find(|p| p.doc == doc) {
                score += self.term_weight(term, p.tf, doc, params);
            }
        }
        Ok(score)
    }

    /// Scores for every document matching at least one query term.
    pub fn score_all(&self, query_terms: &[String], params: Bm25Params) -> HashMap<usize, f64> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in query_terms {
            let Some(list) = self.postings.get(term) else { continue };
            for p in list {
                *acc.entry(p.doc).or_insert(0.0) += self.term_weight(term, p.tf, p.doc, params);
            }
        }
        acc
    }

    /// Top-k documents, score descending, ties by doc id ascending.
    pub fn search(&self, query_terms: &[String], k: usize, params: Bm25Params) -> RankedList {
        let scored = self
            .score_all(query_terms, params)
            .into_iter()
            .map(|(doc, s)| (self.doc_ids[doc].clone(), s))
            .collect();
        let mut list = RankedList::from_unsorted(scored);
        list.entries.truncate(k);
        list
    }
}

pub fn build_index(docs: &[TweetDoc]) -> Result<InvertedIndex> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut index = InvertedIndex::new();
    for doc in docs {
        index.add(doc)?;
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
}

fn rank_order(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

impl RankedList {
    fn from_unsorted(items: Vec<(String, f64)>) -> Self {
        let mut entries: Vec<RankedEntry> = items
            .into_iter()
            .map(|(doc_id, score)| RankedEntry { doc_id, score })
            .collect();
        entries.sort_by(rank_order);
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }
}

/// Returns `(original, modified)` token sequences, where every
/// "covid 19" / "covid19" occurrence is replaced by "coronavirus".
pub fn expand_query(mist: &MisTarget) -> (Vec<String>, Vec<String>) {
    let original = tokenize(&mist.description);
    let mut modified = Vec::with_capacity(original.len());
    let mut i = 0;
    while i < original.len() {
        let tok = original[i].as_str();
        if tok == "covid19" {
            modified.push("coronavirus".to_string());
            i += 1;
        } else if tok == "covid" && original.get(i + 1).map(String::as_str) == Some("19") {
            modified.push("coronavirus".to_string());
            i += 2;
        } else {
            modified.push(original[i].clone());
            i += 1;
        }
    }
    (original, modified)
}

/// Pool the top-k of the original and expanded queries, keeping the higher
/// score on overlap.
pub fn retrieve_candidates(
    index: &InvertedIndex,
    mist: &MisTarget,
    k: usize,
    params: Bm25Params,
) -> RankedList {
    let (original, modified) = expand_query(mist);
    let mut pooled: HashMap<String, f64> = HashMap::new();
    let mut merge = |list: RankedList| {
        for e in list.entries {
            let slot = pooled.entry(e.doc_id).or_insert(f64::NEG_INFINITY);
            if e.score > *slot {
                *slot = e.score;
            }
        }
    };
    merge(index.search(&original, k, params));
    if modified != original {
        merge(index.search(&modified, k, params));
    }
    RankedList::from_unsorted(pooled.into_iter().collect())
}

/// One line of `candidates.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub mist_id: String,
    pub tweet_id: String,
    pub score: f64,
}

pub fn retrieve_all(index: &InvertedIndex, mists: &[MisTarget], k: usize, params: Bm25Params) -> Vec<Candidate> {
    mists
        .iter()
        .flat_map(|m| {
            retrieve_candidates(index, m, k, params)
                .entries
                .into_iter()
                .map(move |e| Candidate {
                    mist_id: m.id.clone(),
                    tweet_id: e.doc_id,
                    score: e.score,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn single_doc_index() {
        let index = build_index(&[TweetDoc::new("d", "a a b")]).unwrap();
        assert_eq!(index.postings("a"), vec![("d", 2)]);
        assert_eq!(index.postings("b"), vec![("d", 1)]);
        assert_eq!(index.avg_doc_length(), 3.0);
    }

    #[test]
    fn add_increments_count() {
        let mut index = build_index(&[TweetDoc::new("d", "a")]).unwrap();
        index.add(&TweetDoc::new("e", "b c")).unwrap();
        assert_eq!(index.doc_count(), 2);
        assert!(index.add(&TweetDoc::new("e", "again")).is_err());
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(build_index(&[]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn non_matching_query_scores_zero() {
        let index = build_index(&[TweetDoc::new("d", "a b")]).unwrap();
        let s = index.bm25_score(&toks("z y"), "d", Bm25Params::default()).unwrap();
        assert_eq!(s, 0.0);
        assert!(index.bm25_score(&toks("a"), "nope", Bm25Params::default()).is_err());
    }

    #[test]
    fn single_doc_idf() {
        let index = build_index(&[TweetDoc::new("d", "a b")]).unwrap();
        let expected = (1.0f64 + 0.5 / 1.5).ln();
        assert!((index.idf("a") - expected).abs() < 1e-15);
        assert!((expected - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn expansion_of_hyphenated_form() {
        let m = MisTarget::new("4", "The COVID-19 vaccine causes Bell's palsy.");
        let (orig, modified) = expand_query(&m);
        assert!(orig.contains(&"covid".to_string()));
        assert!(modified.contains(&"coronavirus".to_string()));
        assert!(!modified.contains(&"covid".to_string()));
        assert!(!modified.contains(&"19".to_string()));
    }

    #[test]
    fn expansion_variants() {
        let (_, m) = expand_query(&MisTarget::new("x", "covid19 shot"));
        assert_eq!(m, toks("coronavirus shot"));
        let (_, m) = expand_query(&MisTarget::new("x", "Covid 19 jab"));
        assert_eq!(m, toks("coronavirus jab"));
        let (o, m) = expand_query(&MisTarget::new("x", "vaccines alter dna"));
        assert_eq!(o, m);
        // a lone "covid" is left alone
        let (o, m) = expand_query(&MisTarget::new("x", "covid vaccine"));
        assert_eq!(o, m);
    }

    #[test]
    fn disjoint_vocabulary_returns_nothing() {
        let index = build_index(&[TweetDoc::new("d", "cats and dogs")]).unwrap();
        let list = retrieve_candidates(&index, &MisTarget::new("m", "vaccine dna"), 200, Bm25Params::default());
        assert!(list.is_empty());
    }
}
