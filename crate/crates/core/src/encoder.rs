//! Text features and the learned projections into knowledge-embedding space.
//!
//! Features come from a signed hashing encoder (word unigrams, word bigrams,
//! character trigrams) or from precomputed vectors loaded from JSONL. Either
//! way they are L2-normalized and frozen; only [`ProjectionEncoder`]s train.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::read_jsonl;
use crate::error::{check_dim, Error, Result};
use crate::text::{seeded_hash, tokenize};

pub const DEFAULT_FEATURE_DIM: usize = 4096;
pub const DEFAULT_HASH_SEED: u64 = 0x6d69_7374;

/// A unit-norm feature vector stored sparsely: `(index, value)` pairs sorted
/// by index, no zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    /// Build from a dense vector, normalizing to unit L2 norm.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let entries: Vec<(u32, f64)> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        Self::normalized(values.len(), entries)
    }

    fn normalized(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidData("zero feature vector".into()));
        }
        for (_, v) in &mut entries {
            *v /= norm;
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, va) = self.entries[i];
            let (b, vb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += va * vb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

/// Signed feature hashing of unigrams, bigrams and character trigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashedEncoder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_FEATURE_DIM,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl HashedEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    /// Raw feature strings before hashing. Character trigrams are taken per
    /// token with `#` boundary padding.
    pub fn features(text: &str) -> Vec<String> {
        let tokens = tokenize(text);
        let mut feats: Vec<String> = tokens.iter().map(|t| format!("w:{t}")).collect();
        feats.extend(tokens.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
        for t in &tokens {
            let padded: Vec<char> = format!("#{t}#").chars().collect();
            feats.extend(padded.windows(3).map(|w| format!("c:{}", w.iter().collect::<String>())));
        }
        feats
    }

    pub fn encode_text(&self, text: &str) -> Result<FeatureVector> {
        let feats = Self::features(text);
        if feats.is_empty() {
            return Err(Error::UnencodableText(text.to_string()));
        }
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for f in &feats {
            let h = seeded_hash(f, self.seed);
            let bucket = (h % self.dim as u64) as u32;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            *acc.entry(bucket).or_insert(0.0) += sign;
        }
        let entries: Vec<(u32, f64)> = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
        if entries.is_empty() {
            // every bucket cancelled out; astronomically rare
            return Err(Error::UnencodableText(text.to_string()));
        }
        FeatureVector::normalized(self.dim, entries)
    }
}

/// `{"id": str, "vector": [real]}`, one per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub id: String,
    pub vector: Vec<f64>,
}

/// Load externally computed vectors, re-normalized to unit length.
pub fn load_precomputed(path: impl AsRef<Path>) -> Result<BTreeMap<String, FeatureVector>> {
    let records: Vec<EmbeddingRecord> = read_jsonl(path.as_ref())?;
    let mut out = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for r in records {
        match dim {
            None => dim = Some(r.vector.len()),
            Some(d) if d != r.vector.len() => {
                return Err(Error::InvalidData(format!(
                    "embedding {} has dimension {}, expected {d}",
                    r.id,
                    r.vector.len()
                )))
            }
            _ => {}
        }
        let fv = FeatureVector::from_dense(&r.vector)
            .map_err(|e| Error::InvalidData(format!("embedding {}: {e}", r.id)))?;
        if out.insert(r.id.clone(), fv).is_some() {
            return Err(Error::InvalidData(format!("duplicate embedding id {}", r.id)));
        }
    }
    Ok(out)
}

/// How a model turns texts into features; stored with the model so
/// prediction re-encodes exactly as training did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncoderSpec {
    Hashed { dim: usize, seed: u64 },
    Precomputed { path: PathBuf, dim: usize },
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec::Hashed {
            dim: DEFAULT_FEATURE_DIM,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

/// A ready-to-use feature source.
#[derive(Debug, Clone)]
pub enum FeatureEncoder {
    Hashed(HashedEncoder),
    Precomputed {
        path: PathBuf,
        vectors: BTreeMap<String, FeatureVector>,
        dim: usize,
    },
}

impl FeatureEncoder {
    pub fn hashed(dim: usize) -> Self {
        FeatureEncoder::Hashed(HashedEncoder::new(dim, DEFAULT_HASH_SEED))
    }

    pub fn precomputed(path: impl AsRef<Path>) -> Result<Self> {
        let vectors = load_precomputed(path.as_ref())?;
        let dim = vectors
            .values()
            .next()
            .map(FeatureVector::dim)
            .ok_or_else(|| Error::InvalidData(format!("{} holds no embeddings", path.as_ref().display())))?;
        Ok(FeatureEncoder::Precomputed {
            path: path.as_ref().to_path_buf(),
            vectors,
            dim,
        })
    }

    pub fn from_spec(spec: &EncoderSpec) -> Result<Self> {
        match spec {
            EncoderSpec::Hashed { dim, seed } => Ok(FeatureEncoder::Hashed(HashedEncoder::new(*dim, *seed))),
            EncoderSpec::Precomputed { path, dim } => {
                let enc = Self::precomputed(path)?;
                check_dim(*dim, enc.dim())?;
                Ok(enc)
            }
        }
    }

    pub fn spec(&self) -> EncoderSpec {
        match self {
            FeatureEncoder::Hashed(h) => EncoderSpec::Hashed { dim: h.dim, seed: h.seed },
            FeatureEncoder::Precomputed { path, dim, .. } => EncoderSpec::Precomputed {
                path: path.clone(),
                dim: *dim,
            },
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureEncoder::Hashed(h) => h.dim,
            FeatureEncoder::Precomputed { dim, .. } => *dim,
        }
    }

    /// Features for an item: hashed from `text`, or looked up by `id`.
    pub fn encode(&self, id: &str, text: &str) -> Result<FeatureVector> {
        match self {
            FeatureEncoder::Hashed(h) => h.encode_text(text),
            FeatureEncoder::Precomputed { vectors, .. } => vectors
                .get(id)
                .cloned()
                .ok_or_else(|| Error::InvalidData(format!("no precomputed embedding for {id}"))),
        }
    }
}

/// Features for tweets and targets, keyed by id.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    pub tweets: HashMap<String, FeatureVector>,
    pub mists: HashMap<String, FeatureVector>,
}

impl FeatureStore {
    pub fn tweet(&self, id: &str) -> Result<&FeatureVector> {
        self.tweets.get(id).ok_or_else(|| Error::UnknownDocument(id.to_string()))
    }

    pub fn mist(&self, id: &str) -> Result<&FeatureVector> {
        self.mists
            .get(id)
            .ok_or_else(|| Error::InvalidData(format!("no features for target {id}")))
    }
}

/// Affine map `weight · f + bias`, weight stored row-major `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionEncoder {
    out_dim: usize,
    in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ProjectionEncoder {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random<R: Rng>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..out_dim * in_dim).map(|_| rng.gen_range(-limit..limit)).collect();
        Self {
            out_dim,
            in_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(out_dim: usize, in_dim: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        check_dim(out_dim * in_dim, weight.len())?;
        check_dim(out_dim, bias.len())?;
        Ok(Self {
            out_dim,
            in_dim,
            weight,
            bias,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn project(&self, f: &FeatureVector) -> Result<Vec<f64>> {
        check_dim(self.in_dim, f.dim())?;
        let mut out = self.bias.clone();
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            *o += f.entries.iter().map(|&(c, v)| row[c as usize] * v).sum::<f64>();
        }
        Ok(out)
    }

    /// Accumulate `d loss / d (weight, bias)` given `upstream = d loss / d output`.
    pub fn accumulate_grad(&self, f: &FeatureVector, upstream: &[f64], grad_weight: &mut [f64], grad_bias: &mut [f64]) {
        for (r, &g) in upstream.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad_bias[r] += g;
            let row = &mut grad_weight[r * self.in_dim..(r + 1) * self.in_dim];
            for &(c, v) in &f.entries {
                row[c as usize] += g * v;
            }
        }
    }

    /// Principal-component projection fitted on `samples`: row `k` is the
    /// k-th principal axis (unit norm, largest-magnitude entry positive) and
    /// the bias centers the sample mean at the origin. Rows beyond the rank
    /// of the centered samples are zero. Uses no labels.
    pub fn pca(samples: &[&FeatureVector], out_dim: usize, in_dim: usize) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::InvalidData("PCA needs at least two samples".into()));
        }
        for f in samples {
            check_dim(in_dim, f.dim())?;
        }
        let mut mean = vec![0.0; in_dim];
        for f in samples {
            for &(c, v) in f.entries() {
                mean[c as usize] += v / n as f64;
            }
        }
        let centered: Vec<Vec<f64>> = samples
            .iter()
            .map(|f| {
                let mut x: Vec<f64> = mean.iter().map(|m| -m).collect();
                for &(c, v) in f.entries() {
                    x[c as usize] += v;
                }
                x
            })
            .collect();
        // Eigen-decompose the n×n Gram matrix rather than the d×d covariance.
        let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
        });
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut enc = Self::zeros(out_dim, in_dim);
        let tol = 1e-10 * eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (row, &k) in order.iter().take(out_dim).enumerate() {
            let lambda = eig.eigenvalues[k];
            if lambda <= tol {
                break;
            }
            let u = eig.eigenvectors.column(k);
            let mut axis = vec![0.0; in_dim];
            for (i, x) in centered.iter().enumerate() {
                let ui = u[i];
                axis.iter_mut().zip(x).for_each(|(a, v)| *a += ui * v);
            }
            let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
            let pivot = axis
                .iter()
                .copied()
                .fold(0.0f64, |best, a| if a.abs() > best.abs() { a } else { best });
            let s = if pivot < 0.0 { -1.0 / norm } else { 1.0 / norm };
            let w = &mut enc.weight[row * in_dim..(row + 1) * in_dim];
            w.iter_mut().zip(&axis).for_each(|(w, a)| *w = a * s);
            enc.bias[row] = -w.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(enc)
    }

    /// `weight[r, c]`
    pub fn weight_at(&self, r: usize, c: usize) -> f64 {
        self.weight[r * self.in_dim + c]
    }
}

/// T-KEPE: project tweet features, checking the output size the model expects.
pub fn project_tweet(enc: &ProjectionEncoder, f: &FeatureVector, expected_out: usize) -> Result<Vec<f64>> {
    check_dim(expected_out, enc.out_dim())?;
    enc.project(f)
}

/// M-KEPE: project target features, checking the output size the model expects.
pub fn project_mist(enc: &ProjectionEncoder, f: &FeatureVector, expected_out: usize) -> Result<Vec<f64>> {
    check_dim(expected_out, enc.out_dim())?;
    enc.project(f)
}
