mod common;

use std::collections::{BTreeMap, HashSet};

use common::*;
use mistlink::corpus::RelevanceJudgment;
use mistlink::encoder::{FeatureVector, HashedEncoder, ProjectionEncoder};
use mistlink::kge::ModelKind;
use mistlink::mkg::{LinkTriple, MisinfoKnowledgeGraph};
use mistlink::trainer::{
    adam_step, batch_loss_and_grad, lr_at, margin_loss, sample_negative, AdamState, TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn random_word<R: Rng>(rng: &mut R, alphabet: &[u8]) -> String {
    let len = rng.gen_range(3..9);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())] as char).collect()
}

#[test]
fn unrelated_texts_are_nearly_orthogonal() {
    // Disjoint alphabets share no token, bigram or character trigram.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let enc = HashedEncoder::default();
    let mut total = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(4..12);
        let a: Vec<String> = (0..n).map(|_| random_word(&mut rng, b"abcdefghijklm")).collect();
        let b: Vec<String> = (0..n).map(|_| random_word(&mut rng, b"nopqrstuvwxyz")).collect();
        let fa = enc.encode_text(&a.join(" ")).unwrap();
        let fb = enc.encode_text(&b.join(" ")).unwrap();
        total += fa.dot(&fb).abs();
    }
    let mean = total / 1000.0;
    assert!(mean < 0.05, "mean |cos| {mean}");
}

#[test]
fn projection_is_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let mut p = ProjectionEncoder::random(9, 30, &mut rng);
        p.bias = uniform_vec(&mut rng, 9, 1.0);
        let f1 = uniform_vec(&mut rng, 30, 1.0);
        let f2 = uniform_vec(&mut rng, 30, 1.0);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| a * x + b * y).collect();
        // from_dense normalizes, so compare on the normalized inputs
        let v1 = FeatureVector::from_dense(&f1).unwrap();
        let v2 = FeatureVector::from_dense(&f2).unwrap();
        let vm = FeatureVector::from_dense(&mix).unwrap();
        let (n1, n2, nm) = (norm(&f1), norm(&f2), norm(&mix));
        let (a, b) = (a * n1 / nm, b * n2 / nm);
        let lhs = p.project(&vm).unwrap();
        let (p1, p2) = (p.project(&v1).unwrap(), p.project(&v2).unwrap());
        for r in 0..9 {
            let rhs = a * p1[r] + b * p2[r] - (a + b - 1.0) * p.bias[r];
            assert!((lhs[r] - rhs).abs() < 1e-10);
        }
    }
}

#[test]
fn projection_weight_gradient_by_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut p = ProjectionEncoder::random(4, 10, &mut rng);
    let f = dense_feature(&mut rng, 10);
    let up = uniform_vec(&mut rng, 4, 1.0);
    let objective = |p: &ProjectionEncoder| p.project(&f).unwrap().iter().zip(&up).map(|(o, u)| o * u).sum::<f64>();
    let mut gw = vec![0.0; 40];
    let mut gb = vec![0.0; 4];
    p.accumulate_grad(&f, &up, &mut gw, &mut gb);
    for i in 0..40 {
        let orig = p.weight[i];
        p.weight[i] = orig + FD_STEP;
        let lp = objective(&p);
        p.weight[i] = orig - FD_STEP;
        let lm = objective(&p);
        p.weight[i] = orig;
        assert!(((lp - lm) / (2.0 * FD_STEP) - gw[i]).abs() < 1e-8);
    }
}

#[test]
fn pca_axes_are_orthonormal_and_centered() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let samples: Vec<FeatureVector> = (0..30).map(|_| dense_feature(&mut rng, 20)).collect();
    let refs: Vec<&FeatureVector> = samples.iter().collect();
    let p = ProjectionEncoder::pca(&refs, 8, 20).unwrap();
    for a in 0..8 {
        for b in 0..8 {
            let dot: f64 = (0..20).map(|c| p.weight_at(a, c) * p.weight_at(b, c)).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((dot - want).abs() < 1e-9);
        }
    }
    let mut mean = vec![0.0; 8];
    for s in &samples {
        for (m, v) in mean.iter_mut().zip(p.project(s).unwrap()) {
            *m += v / 30.0;
        }
    }
    assert!(mean.iter().all(|m| m.abs() < 1e-9));
    // variance captured by successive axes does not increase
    let var: Vec<f64> = (0..8)
        .map(|k| samples.iter().map(|s| p.project(s).unwrap()[k].powi(2)).sum::<f64>())
        .collect();
    assert!(var.windows(2).all(|w| w[0] >= w[1] - 1e-9));
}

// ---- optimizer ----

#[test]
fn adam_first_step_closed_form() {
    let mut p = vec![0.5];
    let mut state = AdamState::new(&[1]);
    let mut g = vec![vec![1.0]];
    adam_step(&mut [&mut p], &mut g, &mut state, 0.1, 10.0).unwrap();
    // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε)
    assert!((p[0] - (0.5 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
}

#[test]
fn adam_constant_gradient_steps_are_lr() {
    let mut p = vec![0.0];
    let mut state = AdamState::new(&[1]);
    for k in 1..=20 {
        let before = p[0];
        adam_step(&mut [&mut p], &mut vec![vec![1.0]], &mut state, 0.1, 10.0).unwrap();
        assert!((before - p[0] - 0.1).abs() < 1e-6, "step {k}");
    }
}

#[test]
fn adam_rejects_non_finite() {
    let mut p = vec![0.0];
    let mut state = AdamState::new(&[1]);
    let err = adam_step(&mut [&mut p], &mut vec![vec![f64::NAN]], &mut state, 0.1, 1.0).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn clipping_rescales_before_update() {
    let mut p = vec![0.0, 0.0];
    let mut state = AdamState::new(&[2]);
    let mut g = vec![vec![6.0, 8.0]];
    adam_step(&mut [&mut p], &mut g, &mut state, 0.1, 1.0).unwrap();
    assert!((g[0][0] - 0.6).abs() < 1e-12 && (g[0][1] - 0.8).abs() < 1e-12);
}

proptest! {
    #[test]
    fn lr_schedule_shape(total in 1usize..500, lr in 1e-5f64..1.0, warm in 0.01f64..0.99) {
        let cfg = TrainConfig { lr, warmup_fraction: warm, ..TrainConfig::default() };
        let w = ((warm * total as f64).ceil() as usize).clamp(1, total);
        prop_assert_eq!(lr_at(0, total, &cfg), 0.0);
        prop_assert!((lr_at(w, total, &cfg) - lr).abs() < 1e-12);
        prop_assert!(lr_at(total, total, &cfg).abs() < 1e-12 || w == total);
        let mut peak = 0.0f64;
        for s in 0..=total {
            let v = lr_at(s, total, &cfg);
            prop_assert!(v >= 0.0 && v <= lr + 1e-12);
            peak = peak.max(v);
            if s > 0 {
                // piecewise linear: adjacent steps differ by at most one slope
                let slope = lr / w as f64 + lr / (total - w).max(1) as f64;
                prop_assert!((v - lr_at(s - 1, total, &cfg)).abs() <= slope + 1e-12);
            }
        }
        prop_assert!((peak - lr).abs() < 1e-12);
    }

    #[test]
    fn margin_loss_nonnegative(p in -10.0f64..10.0, n in -10.0f64..10.0, g in 0.0f64..5.0) {
        prop_assert!(margin_loss(p, n, g) >= 0.0);
    }
}

#[test]
fn equal_scores_with_zero_margin_make_no_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let (mut model, features, mut pairs) = composed_fixture(ModelKind::TransE, 16, &mut rng);
    pairs[0].negative = pairs[0].positive.clone();
    let (loss, grad) = batch_loss_and_grad(&model, &pairs, &features, 0.0).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.flat().iter().all(|g| *g == 0.0));
    let before = model.clone();
    let mut bufs = grad.into_buffers();
    let mut state = AdamState::new(&model.param_shapes());
    adam_step(&mut model.params_mut(), &mut bufs, &mut state, 0.1, 1.0).unwrap();
    assert_eq!(model, before);
}

// ---- graph ----

fn judgments_from(spec: &[(&str, &str, bool)]) -> Vec<RelevanceJudgment> {
    spec.iter().map(|(t, m, r)| RelevanceJudgment::new(*t, *m, *r)).collect()
}

fn random_graph(rng: &mut ChaCha8Rng) -> (MisinfoKnowledgeGraph, Vec<RelevanceJudgment>, Vec<RelevanceJudgment>) {
    let n_mists = rng.gen_range(1..5);
    let mists: Vec<String> = (0..n_mists).map(|m| format!("m{m}")).collect();
    let mut dev = Vec::new();
    let mut train = Vec::new();
    for t in 0..rng.gen_range(5..60) {
        let target = if rng.gen_bool(0.3) { &mut dev } else { &mut train };
        for m in &mists {
            target.push(RelevanceJudgment::new(format!("t{t}"), m.clone(), rng.gen_bool(0.3)));
        }
    }
    let mut g = MisinfoKnowledgeGraph::seed_fcgs(&mists, &dev).unwrap();
    g.phase1_extend(&train).unwrap();
    (g, dev, train)
}

/// Replays the judgments by hand and counts triples with the cap rule.
fn replay_triple_count(dev: &[RelevanceJudgment], train: &[RelevanceJudgment], cap: Option<usize>) -> usize {
    let mut members: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for j in dev.iter().filter(|j| j.relevant) {
        let m = members.entry(&j.mist_id).or_default();
        if !m.contains(&j.tweet_id.as_str()) {
            m.push(&j.tweet_id);
        }
    }
    let mut total = 0;
    for j in train.iter().filter(|j| j.relevant) {
        let m = members.entry(&j.mist_id).or_default();
        if m.contains(&j.tweet_id.as_str()) {
            continue;
        }
        let prior = m.len();
        total += cap.map_or(prior, |c| c.min(prior));
        m.push(&j.tweet_id);
    }
    total
}

#[test]
fn triple_count_matches_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..200 {
        let (g, dev, train) = random_graph(&mut rng);
        for cap in [None, Some(1), Some(3), Some(10)] {
            let triples = g.training_triples(cap, 5);
            assert_eq!(triples.len(), replay_triple_count(&dev, &train, cap));
            assert!(triples.iter().all(|t| g.contains(t)));
            let unique: HashSet<&LinkTriple> = triples.iter().collect();
            assert_eq!(unique.len(), triples.len());
        }
    }
}

#[test]
fn fcgs_stay_fully_connected() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let (g, _, _) = random_graph(&mut rng);
        for m in g.mists() {
            let n = g.fcg_size(m);
            assert_eq!(g.edge_count(m), n * n.saturating_sub(1) / 2);
            assert_eq!(g.edges().filter(|e| &e.relation == m).count(), g.edge_count(m));
            for a in g.members(m) {
                for b in g.members(m) {
                    assert_eq!(g.has_edge(a, m, b), a != b);
                }
            }
        }
        for t in g.unconnected() {
            assert!(g.memberships(t).is_empty());
        }
    }
}

#[test]
fn membership_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let (_, dev, train) = random_graph(&mut rng);
    let mists: Vec<String> = dev.iter().chain(&train).map(|j| j.mist_id.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut g = MisinfoKnowledgeGraph::seed_fcgs(&mists, &dev).unwrap();
    for chunk in train.chunks(7) {
        let before: Vec<Vec<String>> = mists.iter().map(|m| g.members(m).to_vec()).collect();
        g.phase1_extend(chunk).unwrap();
        for (m, b) in mists.iter().zip(before) {
            assert_eq!(&g.members(m)[..b.len()], b.as_slice());
        }
    }
}

#[test]
fn seed_then_train_example() {
    let dev = judgments_from(&[("a", "m", true), ("b", "m", true)]);
    let train = judgments_from(&[("c", "m", true)]);
    let mut g = MisinfoKnowledgeGraph::seed_fcgs(&["m".to_string()], &dev).unwrap();
    g.phase1_extend(&train).unwrap();
    assert_eq!(g.training_triples(None, 0).len(), 2);
}

// ---- negative sampling ----

#[test]
fn negatives_are_never_edges_and_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    // 3 targets over 40 training tweets, with overlapping FCGs
    let mut train = Vec::new();
    for t in 0..40 {
        for m in 0..3 {
            train.push(RelevanceJudgment::new(format!("t{t:02}"), format!("m{m}"), (t + m) % 4 == 0 || t % 9 == m));
        }
    }
    let mists: Vec<String> = (0..3).map(|m| format!("m{m}")).collect();
    let mut g = MisinfoKnowledgeGraph::seed_fcgs(&mists, &[]).unwrap();
    g.phase1_extend(&train).unwrap();
    let tweets = g.training_tweets();
    let triples = g.training_triples(None, 1);
    let triple = triples.iter().find(|t| t.relation == "m0").unwrap().clone();

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..10_000 {
        let neg = sample_negative(&triple, &g, &tweets, &mut rng).unwrap();
        assert!(!g.contains(&neg));
        assert_eq!((neg.head.as_str(), neg.relation.as_str()), (triple.head.as_str(), triple.relation.as_str()));
        *counts.entry(neg.tail).or_default() += 1;
    }
    let admissible: Vec<&str> = tweets
        .iter()
        .copied()
        .filter(|t| *t != triple.head && !g.has_edge(&triple.head, &triple.relation, t))
        .collect();
    assert!(counts.keys().all(|k| admissible.contains(&k.as_str())));
    let expected = 10_000.0 / admissible.len() as f64;
    let chi2: f64 = admissible
        .iter()
        .map(|t| {
            let o = counts.get(*t).copied().unwrap_or(0) as f64;
            (o - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new((admissible.len() - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn saturated_fcg_exhausts_sampling() {
    let train: Vec<RelevanceJudgment> = (0..4).map(|t| RelevanceJudgment::new(format!("t{t}"), "m", true)).collect();
    let mut g = MisinfoKnowledgeGraph::seed_fcgs(&["m".to_string()], &[]).unwrap();
    g.phase1_extend(&train).unwrap();
    let tweets = g.training_tweets();
    let triple = g.training_triples(None, 0)[0].clone();
    let err = sample_negative(&triple, &g, &tweets, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(err.to_string().contains("egative"), "{err}");
}
