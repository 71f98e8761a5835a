//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance runner. Nothing here calls into the code it checks except to
//! obtain the values under test.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use mistlink::corpus::RelevanceJudgment;
use mistlink::encoder::{EncoderSpec, FeatureStore, FeatureVector};
use mistlink::eval::Counts;
use mistlink::kge::{score_grad, CoreTensor, ModelKind, EMBED_DIM};
use mistlink::model::KgeModel;
use mistlink::pipeline::PipelineConfig;
use mistlink::predictor::{DevRow, Prediction};
use mistlink::synthetic::{planted_corpus, PlantedSpec};
use mistlink::trainer::{batch_loss_and_grad, ContrastivePair, TrainConfig};
use mistlink::mkg::LinkTriple;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn uniform_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---- naive score re-implementations ----

pub fn naive_transe(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for d in 0..h.len() {
        s -= (h[d] + r[d] - t[d]).abs();
    }
    s
}

/// Residual of TransD built with explicit dense `M = r_p h_pᵀ + I` matrices.
pub fn naive_transd_residual(h: &[f64], hp: &[f64], r: &[f64], rp: &[f64], t: &[f64], tp: &[f64]) -> Vec<f64> {
    let n = h.len();
    let mut mh = vec![vec![0.0; n]; n];
    let mut mt = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in 0..n {
            let id = if a == b { 1.0 } else { 0.0 };
            mh[a][b] = rp[a] * hp[b] + id;
            mt[a][b] = rp[a] * tp[b] + id;
        }
    }
    (0..n)
        .map(|a| {
            let ph: f64 = (0..n).map(|b| mh[a][b] * h[b]).sum();
            let pt: f64 = (0..n).map(|b| mt[a][b] * t[b]).sum();
            ph + r[a] - pt
        })
        .collect()
}

pub fn naive_transd(h: &[f64], hp: &[f64], r: &[f64], rp: &[f64], t: &[f64], tp: &[f64]) -> f64 {
    -naive_transd_residual(h, hp, r, rp, t, tp).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn naive_transms_residual(h: &[f64], r: &[f64], alpha: f64, t: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for d in 0..h.len() {
        let a = (t[d] * r[d]).tanh();
        let b = (h[d] * r[d]).tanh();
        out.push(-a * h[d] + r[d] + alpha * h[d] * t[d] - b * t[d]);
    }
    out
}

pub fn naive_transms(h: &[f64], r: &[f64], alpha: f64, t: &[f64]) -> f64 {
    -naive_transms_residual(h, r, alpha, t).iter().map(|x| x.abs()).sum::<f64>()
}

pub fn naive_tucker(w: &CoreTensor, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..h.len() {
        for b in 0..r.len() {
            for c in 0..t.len() {
                s += w.get(a, b, c) * h[a] * r[b] * t[c];
            }
        }
    }
    s
}

pub fn naive_knn(h: &[f64], t: &[f64]) -> f64 {
    -h.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Smallest |component| of the L1 residual, or +∞ for kinds without one.
pub fn kink_distance(kind: ModelKind, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let e = EMBED_DIM;
    let res: Vec<f64> = match kind {
        ModelKind::TransE => (0..e).map(|d| h[d] + r[d] - t[d]).collect(),
        ModelKind::TransD => naive_transd_residual(&h[..e], &h[e..], &r[..e], &r[e..], &t[..e], &t[e..]),
        ModelKind::TransMS => naive_transms_residual(h, &r[..e], r[e], t),
        ModelKind::TuckER => return f64::INFINITY,
        ModelKind::Knn => return naive_knn(h, t).abs(),
    };
    res.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

pub fn random_core<R: Rng>(rng: &mut R) -> CoreTensor {
    CoreTensor::from_vec(EMBED_DIM, EMBED_DIM, uniform_vec(rng, EMBED_DIM.pow(3), 1.0)).unwrap()
}

/// Worst relative error between `score_grad` and central differences over
/// `points` random argument draws away from L1 kinks.
pub fn score_fd_check<R: Rng>(kind: ModelKind, points: usize, rng: &mut R) -> f64 {
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let h = uniform_vec(rng, kind.tweet_dim(), 1.0);
        let r = uniform_vec(rng, kind.mist_dim(), 1.0);
        let t = uniform_vec(rng, kind.tweet_dim(), 1.0);
        let core = kind.has_core().then(|| random_core(rng));
        if kink_distance(kind, &h, &r, &t) < 1e-3 {
            continue;
        }
        done += 1;
        let (_, g) = score_grad(kind, core.as_ref(), &h, &r, &t).unwrap();
        let f = |h: &[f64], r: &[f64], t: &[f64], c: Option<&CoreTensor>| {
            mistlink::kge::score(kind, c, h, r, t).unwrap()
        };
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for (arg, grad) in [(0, &g.head), (1, &g.relation), (2, &g.tail)] {
            let base = [&h, &r, &t][arg];
            for i in 0..base.len() {
                let mut plus = [h.clone(), r.clone(), t.clone()];
                let mut minus = plus.clone();
                plus[arg][i] += FD_STEP;
                minus[arg][i] -= FD_STEP;
                let fp = f(&plus[0], &plus[1], &plus[2], core.as_ref());
                let fm = f(&minus[0], &minus[1], &minus[2], core.as_ref());
                numeric.push((fp - fm) / (2.0 * FD_STEP));
                analytic.push(grad[i]);
            }
        }
        if let (Some(c), Some(gc)) = (&core, &g.core) {
            for i in 0..c.data.len() {
                let mut cp = c.clone();
                let mut cm = c.clone();
                cp.data[i] += FD_STEP;
                cm.data[i] -= FD_STEP;
                numeric.push((f(&h, &r, &t, Some(&cp)) - f(&h, &r, &t, Some(&cm))) / (2.0 * FD_STEP));
                analytic.push(gc[i]);
            }
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub fn dense_feature<R: Rng>(rng: &mut R, dim: usize) -> FeatureVector {
    FeatureVector::from_dense(&uniform_vec(rng, dim, 1.0)).unwrap()
}

/// A model over `in_dim` features with a 3-tweet / 1-target feature store
/// and one contrastive pair `(h, m, p)` vs `(h, m, n)`.
pub fn composed_fixture<R: Rng>(
    kind: ModelKind,
    in_dim: usize,
    rng: &mut R,
) -> (KgeModel, FeatureStore, Vec<ContrastivePair>) {
    let enc = EncoderSpec::Hashed { dim: in_dim, seed: 0 };
    let model = KgeModel::init(kind, enc, in_dim, TrainConfig::default(), rng);
    let mut features = FeatureStore::default();
    for t in ["h", "p", "n"] {
        features.tweets.insert(t.into(), dense_feature(rng, in_dim));
    }
    features.mists.insert("m".into(), dense_feature(rng, in_dim));
    let pairs = vec![ContrastivePair {
        positive: LinkTriple::new("h", "m", "p"),
        negative: LinkTriple::new("h", "m", "n"),
    }];
    (model, features, pairs)
}

fn composed_kink_distance(model: &KgeModel, features: &FeatureStore) -> f64 {
    let emb = |t: &str| model.tweet_embedding(features.tweet(t).unwrap()).unwrap();
    let m = model.mist_embedding(features.mist("m").unwrap()).unwrap();
    let h = emb("h");
    kink_distance(model.kind, &h, &m, &emb("p")).min(kink_distance(model.kind, &h, &m, &emb("n")))
}

/// Central differences of the batch loss with respect to `coords` random
/// parameter coordinates, compared with the analytic gradient. The margin is
/// large so the hinge is always active.
pub fn composed_fd_check<R: Rng>(kind: ModelKind, points: usize, coords: usize, rng: &mut R) -> f64 {
    const MARGIN: f64 = 1e3;
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < points {
        let (mut model, features, pairs) = composed_fixture(kind, 24, rng);
        if composed_kink_distance(&model, &features) < 1e-3 {
            continue;
        }
        done += 1;
        let (_, grad) = batch_loss_and_grad(&model, &pairs, &features, MARGIN).unwrap();
        let buffers = grad.into_buffers();
        let shapes = model.param_shapes();
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for _ in 0..coords {
            let b = rng.gen_range(0..shapes.len());
            let i = rng.gen_range(0..shapes[b]);
            let orig = model.params()[b][i];
            model.params_mut()[b][i] = orig + FD_STEP;
            let lp = batch_loss_and_grad(&model, &pairs, &features, MARGIN).unwrap().0;
            model.params_mut()[b][i] = orig - FD_STEP;
            let lm = batch_loss_and_grad(&model, &pairs, &features, MARGIN).unwrap().0;
            model.params_mut()[b][i] = orig;
            numeric.push((lp - lm) / (2.0 * FD_STEP));
            analytic.push(buffers[b][i]);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

// ---- metric oracle ----

/// Brute-force tp/fp/fn with explicit set operations, per target and pooled.
pub fn set_oracle(preds: &[Prediction], gold: &[RelevanceJudgment]) -> (Counts, BTreeMap<String, Counts>) {
    let mut g: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for j in gold {
        let e = g.entry(&j.tweet_id).or_default();
        if j.relevant {
            e.insert(&j.mist_id);
        }
    }
    let mut p: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for x in preds {
        p.entry(&x.tweet_id).or_default().extend(x.mists.iter().map(String::as_str));
    }
    let mut total = Counts::default();
    let mut per: BTreeMap<String, Counts> = BTreeMap::new();
    let empty = BTreeSet::new();
    for (t, gs) in &g {
        let ps = p.get(t).unwrap_or(&empty);
        for m in gs.intersection(ps) {
            total.tp += 1;
            per.entry(m.to_string()).or_default().tp += 1;
        }
        for m in ps.difference(gs) {
            total.fp += 1;
            per.entry(m.to_string()).or_default().fp += 1;
        }
        for m in gs.difference(ps) {
            total.fn_ += 1;
            per.entry(m.to_string()).or_default().fn_ += 1;
        }
    }
    (total, per)
}

/// Random gold judgments (every tweet judged against every target) and
/// predictions for a random subset of the gold tweets.
pub fn random_multilabel<R: Rng>(rng: &mut R) -> (Vec<Prediction>, Vec<RelevanceJudgment>) {
    let n_tweets = rng.gen_range(1..30);
    let n_mists = rng.gen_range(1..8);
    let p_rel = rng.gen_range(0.0..0.6);
    let p_pred = rng.gen_range(0.0..0.6);
    let mut gold = Vec::new();
    let mut preds = Vec::new();
    for t in 0..n_tweets {
        let tid = format!("t{t}");
        for m in 0..n_mists {
            gold.push(RelevanceJudgment::new(tid.clone(), format!("m{m}"), rng.gen_bool(p_rel)));
        }
        if rng.gen_bool(0.8) {
            let mists: Vec<String> = (0..n_mists)
                .filter(|_| rng.gen_bool(p_pred))
                .map(|m| format!("m{m}"))
                .collect();
            preds.push(Prediction::new(tid, mists));
        }
    }
    (preds, gold)
}

pub fn oracle_ratios(c: Counts) -> (f64, f64, f64) {
    let p = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
    let r = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

// ---- calibration oracle ----

/// Random dev rows. Scores are drawn from a small grid so ties occur.
pub fn random_dev_rows<R: Rng>(rng: &mut R) -> (Vec<DevRow>, usize) {
    let max_n = rng.gen_range(1..6);
    let n_rows = rng.gen_range(1..25);
    let grid = rng.gen_range(3..20);
    let rows = (0..n_rows)
        .map(|i| {
            let k = rng.gen_range(0..=max_n);
            DevRow {
                tweet_id: format!("d{i}"),
                relevant: rng.gen_bool(0.4),
                scores: (0..k).map(|_| -(rng.gen_range(0..grid) as f64) / 3.0).collect(),
            }
        })
        .collect();
    (rows, max_n)
}

/// F1 of the rule "predict when at least `n` scores exceed `t`".
pub fn rule_f1(rows: &[DevRow], t: f64, n: usize) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for r in rows {
        let fire = r.scores.iter().filter(|&&s| s > t).count() >= n;
        match (fire, r.relevant) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Best F1 over every threshold that can change a decision (each distinct
/// score, values just around it, ±∞) and every `N` in `1..=max_n`.
pub fn exhaustive_best_f1(rows: &[DevRow], max_n: usize) -> f64 {
    let mut ts = vec![f64::INFINITY, f64::NEG_INFINITY];
    for r in rows {
        for &s in &r.scores {
            ts.extend([s, s - 1e-9, s + 1e-9]);
        }
    }
    let mut best = 0.0f64;
    for &t in &ts {
        for n in 1..=max_n {
            best = best.max(rule_f1(rows, t, n));
        }
    }
    best
}

// ---- planted pipeline fixture ----

pub fn write_planted(dir: &Path, seed: u64) {
    planted_corpus(&PlantedSpec::default(), seed).write(dir).unwrap();
}

/// Config over a planted corpus in `data`, writing into `out`.
pub fn planted_config(data: &Path, out: &Path, kind: ModelKind, mode: mistlink::Mode) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.inputs.tweets = data.join("tweets.jsonl");
    cfg.inputs.mists = data.join("mists.jsonl");
    cfg.inputs.judgments = data.join("judgments.jsonl");
    cfg.out_dir = out.to_path_buf();
    cfg.model = kind;
    cfg.mode = mode;
    cfg
}

/// Relevant tweets per target in a judgment file.
pub fn relevant_per_target(judgments: &[RelevanceJudgment]) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for j in judgments.iter().filter(|j| j.relevant) {
        *out.entry(j.mist_id.clone()).or_insert(0) += 1;
    }
    out
}
