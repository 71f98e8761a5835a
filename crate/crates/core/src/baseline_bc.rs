//! Binary-classification baseline: a logistic head over the joint feature
//! `f_t ⊕ f_m ⊕ (f_t ⊙ f_m)` of a (tweet, target) pair, trained with
//! cross-entropy and thresholded on dev.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RelevanceJudgment;
use crate::encoder::{EncoderSpec, FeatureStore, FeatureVector};
use crate::error::{check_dim, Error, Result};
use crate::predictor::Prediction;
use crate::trainer::{adam_step, lr_at, AdamState, TrainConfig};

pub const PROB_EPS: f64 = 1e-12;
/// Threshold that no clamped probability can exceed.
pub const NEVER_THRESHOLD: f64 = 1.0 - PROB_EPS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcModel {
    pub encoder: EncoderSpec,
    /// Length `3d`.
    pub weight: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub loss_trace: Vec<f64>,
}

impl BcModel {
    pub fn zeros(encoder: EncoderSpec, feature_dim: usize) -> Self {
        Self {
            encoder,
            weight: vec![0.0; 3 * feature_dim],
            bias: 0.0,
            threshold: 0.5,
            loss_trace: Vec::new(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.len() / 3
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self).map_err(|e| Error::ModelFormat(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_slice(&bytes).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if m.weight.len() % 3 != 0 || !(m.threshold > 0.0 && m.threshold < 1.0) {
            return Err(Error::ModelFormat("bad BC model shape or threshold".into()));
        }
        Ok(m)
    }
}

/// Sparse joint feature as `(index, value)` pairs over `3d` dimensions.
pub fn joint_features(tweet: &FeatureVector, mist: &FeatureVector) -> Result<Vec<(usize, f64)>> {
    check_dim(tweet.dim(), mist.dim())?;
    let d = tweet.dim();
    let mut out: Vec<(usize, f64)> = tweet.entries().iter().map(|&(i, v)| (i as usize, v)).collect();
    out.extend(mist.entries().iter().map(|&(i, v)| (d + i as usize, v)));
    let (a, b) = (tweet.entries(), mist.entries());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((2 * d + a[i].0 as usize, a[i].1 * b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

pub fn bc_logit(model: &BcModel, tweet: &FeatureVector, mist: &FeatureVector) -> Result<f64> {
    check_dim(model.feature_dim(), tweet.dim())?;
    let x = joint_features(tweet, mist)?;
    Ok(model.bias + x.iter().map(|&(i, v)| model.weight[i] * v).sum::<f64>())
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Relevance probability, clamped to `[1e-12, 1 − 1e-12]`.
pub fn bc_prob(model: &BcModel, tweet: &FeatureVector, mist: &FeatureVector) -> Result<f64> {
    Ok(sigmoid(bc_logit(model, tweet, mist)?).clamp(PROB_EPS, 1.0 - PROB_EPS))
}

/// Binary cross-entropy computed from the logit, stable for large `|z|`.
pub fn bce_with_logit(z: f64, label: bool) -> f64 {
    let y = if label { 1.0 } else { 0.0 };
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

/// A labeled (tweet, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BcExample {
    pub tweet_id: String,
    pub mist_id: String,
    pub label: bool,
}

impl From<&RelevanceJudgment> for BcExample {
    fn from(j: &RelevanceJudgment) -> Self {
        Self {
            tweet_id: j.tweet_id.clone(),
            mist_id: j.mist_id.clone(),
            label: j.relevant,
        }
    }
}

/// Mean cross-entropy over `batch` and its gradient `(d weight, d bias)`.
pub fn bc_loss_and_grad(
    model: &BcModel,
    batch: &[BcExample],
    features: &FeatureStore,
) -> Result<(f64, Vec<f64>, f64)> {
    let mut gw = vec![0.0; model.weight.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    if batch.is_empty() {
        return Ok((0.0, gw, 0.0));
    }
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        let (ft, fm) = (features.tweet(&ex.tweet_id)?, features.mist(&ex.mist_id)?);
        let x = joint_features(ft, fm)?;
        let z = model.bias + x.iter().map(|&(i, v)| model.weight[i] * v).sum::<f64>();
        loss += bce_with_logit(z, ex.label);
        let dz = (sigmoid(z) - if ex.label { 1.0 } else { 0.0 }) * scale;
        for (i, v) in x {
            gw[i] += dz * v;
        }
        gb += dz;
    }
    Ok((loss * scale, gw, gb))
}

/// Fit the logistic head with the trainer's ADAM, schedule and clipping.
/// The threshold is left at 0.5; see [`calibrate_bc`].
pub fn bc_train(
    examples: &[BcExample],
    features: &FeatureStore,
    encoder: EncoderSpec,
    feature_dim: usize,
    config: &TrainConfig,
) -> Result<BcModel> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::InvalidData("no labeled pairs for the BC baseline".into()));
    }
    let mut model = BcModel::zeros(encoder, feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let total = config.total_steps(examples.len());
    let mut adam = AdamState::new(&[model.weight.len(), 1]);
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<BcExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (loss, gw, gb) = bc_loss_and_grad(&model, &batch, features)?;
            epoch_loss += loss * batch.len() as f64;
            step += 1;
            let mut bias = vec![model.bias];
            let mut grads = vec![gw, vec![gb]];
            adam_step(
                &mut [&mut model.weight, &mut bias],
                &mut grads,
                &mut adam,
                lr_at(step, total, config),
                config.grad_clip_norm,
            )
            .map_err(|e| match e {
                Error::DivergedGradient { .. } => Error::DivergedGradient { step },
                other => other,
            })?;
            model.bias = bias[0];
        }
        model.loss_trace.push(epoch_loss / examples.len() as f64);
    }
    Ok(model)
}

/// Global threshold maximizing F1 over scored dev pairs `(prob, relevant)`.
/// Candidates are the never-predict sentinel, midpoints of consecutive
/// distinct probabilities, and half the smallest probability; ties go to the
/// larger threshold.
pub fn calibrate_bc(scored: &[(f64, bool)]) -> (f64, f64) {
    let positives = scored.iter().filter(|(_, r)| *r).count();
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = (NEVER_THRESHOLD, 0.0);
    if positives == 0 {
        return best;
    }
    // Walk thresholds downwards; after consuming all pairs with prob ≥ p_i,
    // the threshold between p_i and the next lower value predicts them.
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let p = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == p {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let t = if i < sorted.len() {
            sorted[i].0 + (p - sorted[i].0) / 2.0
        } else {
            p / 2.0
        };
        if t >= NEVER_THRESHOLD {
            continue;
        }
        let f1 = (2 * tp) as f64 / (2 * tp + fp + (positives - tp)) as f64;
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best
}

/// Predict every target whose probability exceeds the model threshold.
pub fn bc_predict(
    model: &BcModel,
    tweet_id: &str,
    tweet: &FeatureVector,
    mists: &[(String, FeatureVector)],
) -> Result<Prediction> {
    let mut out = Vec::new();
    for (id, f) in mists {
        if bc_prob(model, tweet, f)? > model.threshold {
            out.push(id.clone());
        }
    }
    Ok(Prediction::new(tweet_id, out))
}
