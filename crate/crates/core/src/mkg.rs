//! The misinformation knowledge graph: one fully connected subgraph (FCG) per
//! target, bootstrapped from dev judgments (seed) and then training judgments.
//!
//! Edges are implicit: two distinct members of `FCG(m)` are always joined by
//! an `m`-labeled edge, so the graph stores ordered membership lists and
//! derives edges on demand.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelevanceJudgment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl LinkTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Dev,
    Train,
}

#[derive(Debug, Clone, Default)]
struct Fcg {
    members: Vec<String>,
    position: HashMap<String, usize>,
    seed_size: usize,
}

impl Fcg {
    fn push(&mut self, tweet: &str) -> bool {
        if self.position.contains_key(tweet) {
            return false;
        }
        self.position.insert(tweet.to_string(), self.members.len());
        self.members.push(tweet.to_string());
        true
    }
}

/// Counters reported by [`MisinfoKnowledgeGraph::phase1_extend`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExtendStats {
    /// Relevant (tweet, target) pairs that added a member.
    pub member_additions: usize,
    /// Tweets that were not in the graph before and now belong to an FCG.
    pub new_connected_nodes: usize,
    /// Edges added across all FCGs.
    pub edges_added: usize,
    /// Training tweets left without any FCG.
    pub unconnected: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MisinfoKnowledgeGraph {
    mists: Vec<String>,
    fcgs: BTreeMap<String, Fcg>,
    origins: BTreeMap<String, Origin>,
    unconnected: BTreeSet<String>,
}

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl MisinfoKnowledgeGraph {
    /// An empty graph over a fixed relation vocabulary.
    pub fn new(mists: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mists: Vec<String> = mists.into_iter().map(Into::into).collect();
        let fcgs = mists.iter().map(|m| (m.clone(), Fcg::default())).collect();
        Self {
            mists,
            fcgs,
            ..Default::default()
        }
    }

    /// Step 1: every dev tweet judged relevant to a target joins that target's
    /// FCG; dev tweets relevant to nothing stay unconnected.
    pub fn seed_fcgs(mists: &[String], dev: &[RelevanceJudgment]) -> Result<Self> {
        let mut graph = Self::new(mists.iter().cloned());
        graph.absorb(dev, Origin::Dev)?;
        for fcg in graph.fcgs.values_mut() {
            fcg.seed_size = fcg.members.len();
        }
        for m in &graph.mists {
            if graph.fcgs[m].members.is_empty() {
                log::warn!("seed: target {m} has an empty FCG");
            }
        }
        Ok(graph)
    }

    /// Phase 1 of bootstrapping: relevant training pairs join their FCGs in
    /// file order, each new member linked to every existing member.
    pub fn phase1_extend(&mut self, train: &[RelevanceJudgment]) -> Result<ExtendStats> {
        self.absorb(train, Origin::Train)
    }

    fn absorb(&mut self, judgments: &[RelevanceJudgment], origin: Origin) -> Result<ExtendStats> {
        let mut stats = ExtendStats::default();
        let mut touched: Vec<&str> = Vec::new();
        for j in judgments {
            if !self.fcgs.contains_key(&j.mist_id) {
                return Err(Error::InvalidData(format!("unknown target {}", j.mist_id)));
            }
            let was_connected = self.is_connected(&j.tweet_id);
            self.origins.entry(j.tweet_id.clone()).or_insert(origin);
            touched.push(&j.tweet_id);
            if !j.relevant {
                continue;
            }
            let fcg = self.fcgs.get_mut(&j.mist_id).expect("checked above");
            let prior = fcg.members.len();
            if fcg.push(&j.tweet_id) {
                stats.member_additions += 1;
                stats.edges_added += prior;
                self.unconnected.remove(&j.tweet_id);
                if !was_connected {
                    stats.new_connected_nodes += 1;
                }
            }
        }
        for t in touched {
            if !self.is_connected(t) && self.unconnected.insert(t.to_string()) {
                stats.unconnected += 1;
            }
        }
        Ok(stats)
    }

    pub fn mists(&self) -> &[String] {
        &self.mists
    }

    pub fn is_connected(&self, tweet: &str) -> bool {
        self.fcgs.values().any(|f| f.position.contains_key(tweet))
    }

    /// FCG members in insertion order (seed members first).
    pub fn members(&self, mist: &str) -> &[String] {
        self.fcgs.get(mist).map_or(&[], |f| f.members.as_slice())
    }

    pub fn fcg_size(&self, mist: &str) -> usize {
        self.members(mist).len()
    }

    pub fn seed_size(&self, mist: &str) -> usize {
        self.fcgs.get(mist).map_or(0, |f| f.seed_size)
    }

    pub fn is_member(&self, mist: &str, tweet: &str) -> bool {
        self.fcgs.get(mist).is_some_and(|f| f.position.contains_key(tweet))
    }

    /// Targets whose FCG contains `tweet`.
    pub fn memberships(&self, tweet: &str) -> Vec<&str> {
        self.fcgs
            .iter()
            .filter(|(_, f)| f.position.contains_key(tweet))
            .map(|(m, _)| m.as_str())
            .collect()
    }

    pub fn origin(&self, tweet: &str) -> Option<Origin> {
        self.origins.get(tweet).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.origins.keys().map(String::as_str)
    }

    pub fn node_count(&self) -> usize {
        self.origins.len()
    }

    pub fn unconnected(&self) -> &BTreeSet<String> {
        &self.unconnected
    }

    /// Tweets that were nodes of the dev (seed) step.
    pub fn dev_tweets(&self) -> Vec<&str> {
        self.tweets_with_origin(Origin::Dev)
    }

    /// `V_T`: every tweet introduced by training judgments.
    pub fn training_tweets(&self) -> Vec<&str> {
        self.tweets_with_origin(Origin::Train)
    }

    fn tweets_with_origin(&self, origin: Origin) -> Vec<&str> {
        self.origins
            .iter()
            .filter(|(_, &o)| o == origin)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Distinct seed-step tweets that joined at least one FCG.
    pub fn seed_connected_count(&self) -> usize {
        self.dev_tweets().into_iter().filter(|t| self.is_connected(t)).count()
    }

    pub fn has_edge(&self, head: &str, relation: &str, tail: &str) -> bool {
        head != tail && self.is_member(relation, head) && self.is_member(relation, tail)
    }

    pub fn contains(&self, triple: &LinkTriple) -> bool {
        self.has_edge(&triple.head, &triple.relation, &triple.tail)
    }

    pub fn edge_count(&self, mist: &str) -> usize {
        pairs(self.fcg_size(mist))
    }

    pub fn total_edges(&self) -> usize {
        self.mists.iter().map(|m| self.edge_count(m)).sum()
    }

    /// Every undirected edge once, as `(earlier member, mist, later member)`.
    pub fn edges(&self) -> impl Iterator<Item = LinkTriple> + '_ {
        self.fcgs.iter().flat_map(|(m, f)| {
            f.members.iter().enumerate().flat_map(move |(j, later)| {
                f.members[..j]
                    .iter()
                    .map(move |earlier| LinkTriple::new(earlier.clone(), m.clone(), later.clone()))
            })
        })
    }

    /// Positive training triples. For every training-added member `t` of
    /// `FCG(m)`, up to `cap` tails are drawn without replacement from the
    /// members present before `t` joined. `None` means no cap.
    pub fn training_triples(&self, cap: Option<usize>, seed: u64) -> Vec<LinkTriple> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for mist in &self.mists {
            let fcg = &self.fcgs[mist];
            for (pos, tweet) in fcg.members.iter().enumerate() {
                if pos < fcg.seed_size {
                    continue;
                }
                if pos == 0 {
                    log::debug!("triples: {tweet} founded FCG({mist}); no prior members");
                    continue;
                }
                let take = cap.map_or(pos, |c| c.min(pos));
                let prior = &fcg.members[..pos];
                let chosen: Vec<&String> = if take == pos {
                    prior.iter().collect()
                } else {
                    prior.choose_multiple(&mut rng, take).collect()
                };
                out.extend(chosen.into_iter().map(|tail| LinkTriple::new(tweet.clone(), mist.clone(), tail.clone())));
            }
        }
        out
    }

    pub fn to_document(&self) -> GraphDocument {
        let fcgs = self
            .fcgs
            .iter()
            .map(|(m, f)| {
                (
                    m.clone(),
                    FcgDocument {
                        members: f.members.clone(),
                        seed_size: f.seed_size,
                        edges: pairs(f.members.len()),
                    },
                )
            })
            .collect();
        let adjacency = self
            .origins
            .keys()
            .map(|t| (t.clone(), self.memberships(t).into_iter().map(String::from).collect()))
            .collect();
        GraphDocument {
            version: GRAPH_FORMAT_VERSION,
            mists: self.mists.clone(),
            fcgs,
            origins: self.origins.clone(),
            unconnected: self.unconnected.iter().cloned().collect(),
            adjacency,
        }
    }

    pub fn from_document(doc: GraphDocument) -> Result<Self> {
        if doc.version != GRAPH_FORMAT_VERSION {
            return Err(Error::InvalidData(format!("unsupported graph version {}", doc.version)));
        }
        let mut graph = Self::new(doc.mists.iter().cloned());
        for (m, f) in doc.fcgs {
            let fcg = graph
                .fcgs
                .get_mut(&m)
                .ok_or_else(|| Error::InvalidData(format!("graph: unknown target {m}")))?;
            for t in &f.members {
                if !doc.origins.contains_key(t) {
                    return Err(Error::InvalidData(format!("graph: member {t} has no origin")));
                }
                if !fcg.push(t) {
                    return Err(Error::InvalidData(format!("graph: {t} listed twice in FCG({m})")));
                }
            }
            if f.seed_size > fcg.members.len() {
                return Err(Error::InvalidData(format!("graph: FCG({m}) seed size too large")));
            }
            fcg.seed_size = f.seed_size;
        }
        graph.origins = doc.origins;
        graph.unconnected = doc.unconnected.into_iter().collect();
        if let Some(t) = graph.unconnected.iter().find(|t| graph.is_connected(t)) {
            return Err(Error::InvalidData(format!("graph: {t} is both connected and unconnected")));
        }
        for (t, listed) in &doc.adjacency {
            let actual: HashSet<&str> = graph.memberships(t).into_iter().collect();
            let listed: HashSet<&str> = listed.iter().map(String::as_str).collect();
            if actual != listed {
                return Err(Error::InvalidData(format!("graph: adjacency of {t} disagrees with membership")));
            }
        }
        Ok(graph)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: GraphDocument = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::from_document(doc)
    }
}

pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// On-disk layout of `graph.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDocument {
    pub version: u32,
    pub mists: Vec<String>,
    pub fcgs: BTreeMap<String, FcgDocument>,
    pub origins: BTreeMap<String, Origin>,
    pub unconnected: Vec<String>,
    /// tweet id -> targets whose FCG contains it.
    pub adjacency: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcgDocument {
    pub members: Vec<String>,
    pub seed_size: usize,
    pub edges: usize,
}

/// Train/dev/test partition of a judgment set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<RelevanceJudgment>,
    pub dev: Vec<RelevanceJudgment>,
    pub test: Vec<RelevanceJudgment>,
}

impl DataSplit {
    /// Fails if a (tweet, target) pair occurs in more than one split.
    pub fn validate(&self) -> Result<()> {
        let mut seen: HashSet<(&str, &str)> = HashSet::new();
        for j in self.train.iter().chain(&self.dev).chain(&self.test) {
            if !seen.insert((&j.tweet_id, &j.mist_id)) {
                return Err(Error::InvalidData(format!(
                    "pair ({}, {}) appears in more than one split",
                    j.tweet_id, j.mist_id
                )));
            }
        }
        Ok(())
    }
}

/// Split judgments by tweet, so all judgments of one tweet land together.
/// Tweets are stratified by their first relevant target (or "none") and each
/// stratum is shuffled with `seed`; the first `round(train_frac * n)` go to
/// train, the next `round(dev_frac * n)` to dev, the rest to test. Judgment
/// order within each split follows the input.
pub fn split_judgments(
    judgments: &[RelevanceJudgment],
    train_frac: f64,
    dev_frac: f64,
    seed: u64,
) -> Result<DataSplit> {
    if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&dev_frac) || train_frac + dev_frac > 1.0 {
        return Err(Error::Config(format!(
            "split fractions train={train_frac} dev={dev_frac} must be in [0,1] and sum to at most 1"
        )));
    }
    let mut tweet_order: Vec<&str> = Vec::new();
    let mut stratum_of: HashMap<&str, Option<&str>> = HashMap::new();
    for j in judgments {
        let entry = stratum_of.entry(&j.tweet_id).or_insert_with(|| {
            tweet_order.push(&j.tweet_id);
            None
        });
        if entry.is_none() && j.relevant {
            *entry = Some(&j.mist_id);
        }
    }
    let mut strata: BTreeMap<Option<&str>, Vec<&str>> = BTreeMap::new();
    for t in &tweet_order {
        strata.entry(stratum_of[t]).or_default().push(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: HashMap<&str, u8> = HashMap::new();
    for tweets in strata.values_mut() {
        tweets.shuffle(&mut rng);
        let n = tweets.len() as f64;
        let n_train = (train_frac * n).round() as usize;
        let n_dev = ((dev_frac * n).round() as usize).min(tweets.len() - n_train.min(tweets.len()));
        for (i, t) in tweets.iter().enumerate() {
            let bucket = if i < n_train {
                0
            } else if i < n_train + n_dev {
                1
            } else {
                2
            };
            assignment.insert(t, bucket);
        }
    }
    let mut split = DataSplit::default();
    for j in judgments {
        match assignment[j.tweet_id.as_str()] {
            0 => split.train.push(j.clone()),
            1 => split.dev.push(j.clone()),
            _ => split.test.push(j.clone()),
        }
    }
    Ok(split)
}
