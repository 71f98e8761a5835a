//! Planted-graph corpus: targets with disjoint pseudo-word vocabularies,
//! tweets that draw from one target's vocabulary (relevant) or from a noise
//! vocabulary (irrelevant), and a shared pool of filler words.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_jsonl, MisTarget, RelevanceJudgment, TweetDoc};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub targets: usize,
    pub relevant_per_target: usize,
    pub irrelevant: usize,
    pub vocab_per_target: usize,
    pub filler_vocab: usize,
    /// Target (or noise) words per tweet.
    pub topic_words: usize,
    pub filler_words: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            targets: 5,
            relevant_per_target: 80,
            irrelevant: 100,
            vocab_per_target: 20,
            filler_vocab: 60,
            topic_words: 7,
            filler_words: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub tweets: Vec<TweetDoc>,
    pub mists: Vec<MisTarget>,
    /// Every tweet judged against every target, in tweet order.
    pub judgments: Vec<RelevanceJudgment>,
}

impl PlantedCorpus {
    /// Writes `tweets.jsonl`, `mists.jsonl` and `judgments.jsonl` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        write_jsonl(dir.join("tweets.jsonl"), &self.tweets)?;
        write_jsonl(dir.join("mists.jsonl"), &self.mists)?;
        write_jsonl(dir.join("judgments.jsonl"), &self.judgments)
    }
}

fn pseudo_word<R: Rng>(rng: &mut R, seen: &mut HashSet<String>) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    loop {
        let w: String = (0..3)
            .flat_map(|_| [C[rng.gen_range(0..C.len())] as char, V[rng.gen_range(0..V.len())] as char])
            .collect();
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

fn vocabulary<R: Rng>(n: usize, rng: &mut R, seen: &mut HashSet<String>) -> Vec<String> {
    (0..n).map(|_| pseudo_word(rng, seen)).collect()
}

fn sentence<R: Rng>(topic: &[String], k_topic: usize, filler: &[String], k_filler: usize, rng: &mut R) -> String {
    let mut words: Vec<&String> = topic.choose_multiple(rng, k_topic).collect();
    words.extend(filler.choose_multiple(rng, k_filler));
    words.shuffle(rng);
    words.into_iter().map(String::as_str).collect::<Vec<_>>().join(" ")
}

pub fn planted_corpus(spec: &PlantedSpec, seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let vocabs: Vec<Vec<String>> = (0..spec.targets)
        .map(|_| vocabulary(spec.vocab_per_target, &mut rng, &mut seen))
        .collect();
    let noise = vocabulary(spec.vocab_per_target, &mut rng, &mut seen);
    let filler = vocabulary(spec.filler_vocab, &mut rng, &mut seen);

    let mists: Vec<MisTarget> = vocabs
        .iter()
        .enumerate()
        .map(|(i, v)| MisTarget::new(format!("m{i}"), v[..spec.topic_words.min(v.len())].join(" ")))
        .collect();

    let mut labelled: Vec<(String, Option<usize>)> = Vec::new();
    for (i, v) in vocabs.iter().enumerate() {
        for _ in 0..spec.relevant_per_target {
            labelled.push((sentence(v, spec.topic_words, &filler, spec.filler_words, &mut rng), Some(i)));
        }
    }
    for _ in 0..spec.irrelevant {
        labelled.push((sentence(&noise, spec.topic_words, &filler, spec.filler_words, &mut rng), None));
    }
    labelled.shuffle(&mut rng);

    let mut tweets = Vec::with_capacity(labelled.len());
    let mut judgments = Vec::with_capacity(labelled.len() * spec.targets);
    for (n, (text, target)) in labelled.into_iter().enumerate() {
        let id = format!("t{n:04}");
        for (i, m) in mists.iter().enumerate() {
            judgments.push(RelevanceJudgment::new(id.clone(), m.id.clone(), target == Some(i)));
        }
        tweets.push(TweetDoc::new(id, text));
    }
    PlantedCorpus {
        tweets,
        mists,
        judgments,
    }
}
