//! Margin-loss training of the projection encoders (and the TuckER core)
//! with tail-corrupting negative sampling, ADAM, linear warmup/decay, and
//! global-norm gradient clipping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderSpec, FeatureStore, ProjectionEncoder};
use crate::error::{Error, Result};
use crate::kge::{score_grad, ModelKind};
use crate::mkg::{LinkTriple, MisinfoKnowledgeGraph};
use crate::model::{KgeModel, ModelGrad};

pub const NEGATIVE_SAMPLING_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub margin: f64,
    pub negatives_per_positive: usize,
    /// Maximum positive triples per training-added FCG member; 0 = no cap.
    pub per_link_cap: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 40,
            warmup_fraction: 0.10,
            batch_size: 6,
            grad_clip_norm: 1.0,
            margin: 1.0,
            negatives_per_positive: 1,
            per_link_cap: 10,
            seed: 13,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must lie in (0,1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive");
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return bad("margin must be non-negative");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be positive");
        }
        Ok(())
    }

    pub fn link_cap(&self) -> Option<usize> {
        (self.per_link_cap > 0).then_some(self.per_link_cap)
    }

    pub fn total_steps(&self, n_examples: usize) -> usize {
        self.epochs * n_examples.div_ceil(self.batch_size)
    }
}

/// Replace the tail with a uniformly drawn training tweet, redrawing while the
/// corrupted triple is a real edge (or a self-loop).
pub fn sample_negative<R: Rng>(
    triple: &LinkTriple,
    graph: &MisinfoKnowledgeGraph,
    training_tweets: &[&str],
    rng: &mut R,
) -> Result<LinkTriple> {
    if !training_tweets.is_empty() {
        for _ in 0..NEGATIVE_SAMPLING_ATTEMPTS {
            let cand = training_tweets[rng.gen_range(0..training_tweets.len())];
            if cand != triple.head && !graph.has_edge(&triple.head, &triple.relation, cand) {
                return Ok(LinkTriple::new(triple.head.clone(), triple.relation.clone(), cand));
            }
        }
    }
    Err(Error::NegativeSamplingExhausted {
        head: triple.head.clone(),
        relation: triple.relation.clone(),
        attempts: NEGATIVE_SAMPLING_ATTEMPTS,
    })
}

/// `max(0, γ − pos + neg)`
pub fn margin_loss(pos_score: f64, neg_score: f64, margin: f64) -> f64 {
    (margin - pos_score + neg_score).max(0.0)
}

/// Subgradient `(d/d pos, d/d neg)` of [`margin_loss`]; zero once the margin holds.
pub fn margin_loss_grad(pos_score: f64, neg_score: f64, margin: f64) -> (f64, f64) {
    if margin - pos_score + neg_score > 0.0 {
        (-1.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Linear warmup from 0 to `lr` over the first `ceil(warmup_fraction * total)`
/// steps, then linear decay to 0 at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, config: &TrainConfig) -> f64 {
    if total_steps == 0 {
        return 0.0;
    }
    let step = step.min(total_steps);
    let warmup = ((config.warmup_fraction * total_steps as f64).ceil() as usize).clamp(1, total_steps);
    if step <= warmup {
        config.lr * step as f64 / warmup as f64
    } else {
        config.lr * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators mirroring a list of parameter buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }
}

/// Rescale `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
    }
    norm
}

/// One ADAM update after global-norm clipping. An all-zero gradient leaves
/// both the parameters and the optimizer state untouched.
pub fn adam_step(
    params: &mut [&mut Vec<f64>],
    grads: &mut [Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    clip_norm: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::DimMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    for (p, g) in params.iter().zip(grads.iter()) {
        crate::error::check_dim(p.len(), g.len())?;
    }
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::DivergedGradient { step: state.t as usize });
    }
    let norm = clip_global_norm(grads, clip_norm);
    if norm == 0.0 {
        return Ok(());
    }
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v, g) = (&mut state.m[i], &mut state.v[i], &grads[i]);
        for j in 0..p.len() {
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g[j];
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// A positive link paired with one of its corruptions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastivePair {
    pub positive: LinkTriple,
    pub negative: LinkTriple,
}

/// Mean margin loss over `pairs` and its gradient with respect to every
/// trainable parameter, back-propagated through the projections.
pub fn batch_loss_and_grad(
    model: &KgeModel,
    pairs: &[ContrastivePair],
    features: &FeatureStore,
    margin: f64,
) -> Result<(f64, ModelGrad)> {
    let mut grad = model.zero_grad();
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for pair in pairs {
        let head_f = features.tweet(&pair.positive.head)?;
        let rel_f = features.mist(&pair.positive.relation)?;
        let pos_f = features.tweet(&pair.positive.tail)?;
        let neg_f = features.tweet(&pair.negative.tail)?;
        let head = model.tweet_embedding(head_f)?;
        let rel = model.mist_embedding(rel_f)?;
        let pos_tail = model.tweet_embedding(pos_f)?;
        let neg_tail = model.tweet_embedding(neg_f)?;

        let (pos, pos_g) = score_grad(model.kind, model.core.as_ref(), &head, &rel, &pos_tail)?;
        let (neg, neg_g) = score_grad(model.kind, model.core.as_ref(), &head, &rel, &neg_tail)?;
        total += margin_loss(pos, neg, margin);
        let (d_pos, d_neg) = margin_loss_grad(pos, neg, margin);
        if d_pos == 0.0 && d_neg == 0.0 {
            continue;
        }
        let (wp, wn) = (d_pos * scale, d_neg * scale);
        let combine = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| wp * x + wn * y).collect::<Vec<_>>();
        let d_head = combine(&pos_g.head, &neg_g.head);
        let d_rel = combine(&pos_g.relation, &neg_g.relation);
        let d_pos_tail: Vec<f64> = pos_g.tail.iter().map(|g| wp * g).collect();
        let d_neg_tail: Vec<f64> = neg_g.tail.iter().map(|g| wn * g).collect();

        grad.accumulate_tweet(model, head_f, &d_head);
        grad.accumulate_tweet(model, pos_f, &d_pos_tail);
        grad.accumulate_tweet(model, neg_f, &d_neg_tail);
        grad.accumulate_mist(model, rel_f, &d_rel);
        if let (Some(pc), Some(nc)) = (&pos_g.core, &neg_g.core) {
            grad.accumulate_core(&combine(pc, nc));
        }
    }
    Ok((total * scale, grad))
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub triples: usize,
    pub steps: usize,
    pub updates: usize,
    /// Mean margin loss of every (positive, negative) pair seen in each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fit a model on the positive links of a bootstrapped graph.
///
/// KNN is not trained: its tweet projection is the principal-component map
/// of the training tweets' features, and its loss trace stays empty.
pub fn train(
    graph: &MisinfoKnowledgeGraph,
    features: &FeatureStore,
    encoder: EncoderSpec,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<(KgeModel, TrainReport)> {
    config.validate()?;
    let in_dim = match &encoder {
        EncoderSpec::Hashed { dim, .. } | EncoderSpec::Precomputed { dim, .. } => *dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = KgeModel::init(kind, encoder, in_dim, config.clone(), &mut rng);
    let mut report = TrainReport::default();
    if kind == ModelKind::Knn {
        let samples = graph
            .training_tweets()
            .into_iter()
            .map(|t| features.tweet(t))
            .collect::<Result<Vec<_>>>()?;
        model.tweet_proj = ProjectionEncoder::pca(&samples, kind.tweet_dim(), in_dim)?;
        return Ok((model, report));
    }

    let triples = graph.training_triples(config.link_cap(), config.seed);
    if triples.is_empty() {
        return Err(Error::InvalidData("graph yields no training triples".into()));
    }
    let training_tweets = graph.training_tweets();
    let total_steps = config.total_steps(triples.len());
    let mut adam = AdamState::new(&model.param_shapes());
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut step = 0usize;
    report.triples = triples.len();
    log::info!("train {kind}: {} triples, {total_steps} steps", triples.len());

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_terms = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut pairs = Vec::with_capacity(batch.len() * config.negatives_per_positive);
            for &i in batch {
                for _ in 0..config.negatives_per_positive {
                    let negative = sample_negative(&triples[i], graph, &training_tweets, &mut rng)?;
                    pairs.push(ContrastivePair {
                        positive: triples[i].clone(),
                        negative,
                    });
                }
            }
            let (loss, grad) = batch_loss_and_grad(&model, &pairs, features, config.margin)?;
            epoch_loss += loss * pairs.len() as f64;
            epoch_terms += pairs.len();
            step += 1;
            let lr = lr_at(step, total_steps, config);
            let mut grads = grad.into_buffers();
            let before = adam.t;
            adam_step(&mut model.params_mut(), &mut grads, &mut adam, lr, config.grad_clip_norm)
                .map_err(|e| match e {
                    Error::DivergedGradient { .. } => Error::DivergedGradient { step },
                    other => other,
                })?;
            if adam.t > before {
                report.updates += 1;
            }
        }
        let mean = epoch_loss / epoch_terms.max(1) as f64;
        log::debug!("train {kind}: epoch {epoch} mean loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    report.steps = step;
    model.loss_trace = report.epoch_losses.clone();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::RelevanceJudgment;

    fn rel(t: &str, m: &str) -> RelevanceJudgment {
        RelevanceJudgment::new(t, m, true)
    }

    #[test]
    fn margin_loss_examples() {
        assert_eq!(margin_loss(0.0, -5.0, 1.0), 0.0);
        assert_eq!(margin_loss(-2.0, -1.0, 1.0), 2.0);
        assert_eq!(margin_loss_grad(0.0, -5.0, 1.0), (0.0, 0.0));
        assert_eq!(margin_loss_grad(-2.0, -1.0, 1.0), (-1.0, 1.0));
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, 1000, &cfg), 0.0);
        assert_eq!(lr_at(100, 1000, &cfg), cfg.lr);
        assert_eq!(lr_at(1000, 1000, &cfg), 0.0);
        assert!((lr_at(50, 1000, &cfg) - cfg.lr / 2.0).abs() < 1e-18);
        assert!((lr_at(550, 1000, &cfg) - cfg.lr / 2.0).abs() < 1e-18);
    }

    #[test]
    fn schedule_peak_is_lr() {
        let cfg = TrainConfig::default();
        let total = 777;
        let peak = (0..=total).map(|s| lr_at(s, total, &cfg)).fold(0.0, f64::max);
        assert_eq!(peak, cfg.lr);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = vec![1.0, 2.0];
        let mut state = AdamState::new(&[2]);
        let mut g = vec![vec![0.0, 0.0]];
        adam_step(&mut [&mut p], &mut g, &mut state, 0.1, 1.0).unwrap();
        assert_eq!(p, vec![1.0, 2.0]);
        assert_eq!(state.t, 0);
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1]);
        let mut g = vec![vec![1.0]];
        adam_step(&mut [&mut p], &mut g, &mut state, 0.1, 1.0).unwrap();
        // m_hat = v_hat = 1 after bias correction
        assert!((p[0] + 0.1 / (1.0 + ADAM_EPS)).abs() < 1e-15);
    }

    #[test]
    fn clipping_rescales() {
        let mut g = vec![vec![6.0, 8.0]];
        let norm = clip_global_norm(&mut g, 1.0);
        assert_eq!(norm, 10.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[0][1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_diverges() {
        let mut p = vec![0.0];
        let mut state = AdamState::new(&[1]);
        let mut g = vec![vec![f64::NAN]];
        assert!(matches!(
            adam_step(&mut [&mut p], &mut g, &mut state, 0.1, 1.0),
            Err(Error::DivergedGradient { .. })
        ));
    }

    #[test]
    fn negative_avoids_edges() {
        let mists = vec!["m".to_string()];
        let mut g = MisinfoKnowledgeGraph::seed_fcgs(&mists, &[rel("a", "m")]).unwrap();
        g.phase1_extend(&[rel("b", "m"), RelevanceJudgment::new("c", "m", false)]).unwrap();
        let tweets = g.training_tweets();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let triple = LinkTriple::new("b", "m", "a");
        for _ in 0..100 {
            let neg = sample_negative(&triple, &g, &tweets, &mut rng).unwrap();
            assert_eq!(neg.tail, "c");
        }
    }

    #[test]
    fn exhausted_sampling_errors() {
        let mists = vec!["m".to_string()];
        let mut g = MisinfoKnowledgeGraph::seed_fcgs(&mists, &[rel("a", "m")]).unwrap();
        g.phase1_extend(&[rel("b", "m"), rel("c", "m")]).unwrap();
        let tweets = g.training_tweets();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_negative(&LinkTriple::new("b", "m", "a"), &g, &tweets, &mut rng).unwrap_err();
        assert!(matches!(err, Error::NegativeSamplingExhausted { .. }));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            warmup_fraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let parsed: TrainConfig = toml::from_str("epochs = 3\nlr = 0.01").unwrap();
        assert_eq!(parsed.epochs, 3);
        assert_eq!(parsed.batch_size, 6);
    }
}
