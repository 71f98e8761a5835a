//! Multi-label evaluation: per-pair tp/fp/fn, micro precision/recall/F1 and
//! a per-target breakdown.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::RelevanceJudgment;
use crate::error::{Error, Result};
use crate::mkg::MisinfoKnowledgeGraph;
use crate::predictor::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub global: Counts,
    pub per_mist: BTreeMap<String, Counts>,
}

impl ConfusionCounts {
    /// Sum of the per-target counts; always equal to `global`.
    pub fn summed(&self) -> Counts {
        let mut c = Counts::default();
        self.per_mist.values().for_each(|v| c.add(*v));
        c
    }
}

/// Pool tp/fp/fn over every (tweet, target) decision. Each gold tweet counts
/// once; a gold tweet without a prediction predicts nothing. Predictions
/// for tweets absent from `gold` are an error.
pub fn count(predictions: &[Prediction], gold: &[RelevanceJudgment]) -> Result<ConfusionCounts> {
    let mut relevant: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for j in gold {
        let e = relevant.entry(&j.tweet_id).or_default();
        if j.relevant {
            e.insert(&j.mist_id);
        }
    }
    let mut predicted: HashMap<&str, BTreeSet<&str>> = HashMap::new();
    for p in predictions {
        if !relevant.contains_key(p.tweet_id.as_str()) {
            return Err(Error::UnknownDocument(p.tweet_id.clone()));
        }
        predicted
            .entry(&p.tweet_id)
            .or_default()
            .extend(p.mists.iter().map(String::as_str));
    }
    let mut counts = ConfusionCounts::default();
    let empty = BTreeSet::new();
    for (tweet, gold_set) in &relevant {
        let pred_set = predicted.get(tweet).unwrap_or(&empty);
        for m in gold_set.union(pred_set) {
            let c = counts.per_mist.entry(m.to_string()).or_default();
            match (gold_set.contains(m), pred_set.contains(m)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => unreachable!(),
            }
        }
    }
    counts.global = counts.summed();
    Ok(counts)
}

/// Precision, recall and F1 as fractions in [0,1].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

/// `F1 = 2PR/(P+R)`, 0 when `P + R = 0`.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn prf(c: Counts) -> Prf {
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Prf {
        precision,
        recall,
        f1: f1_score(precision, recall),
        degenerate,
    }
}

/// Micro-averaged metrics from the pooled counts.
pub fn micro_prf(counts: &ConfusionCounts) -> Prf {
    prf(counts.global)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistRow {
    pub mist_id: String,
    /// FCG size.
    pub n_x: usize,
    pub counts: Counts,
    pub metrics: Prf,
}

/// One row per target of the graph, in graph order.
pub fn per_mist_report(counts: &ConfusionCounts, graph: &MisinfoKnowledgeGraph) -> Vec<MistRow> {
    graph
        .mists()
        .iter()
        .map(|m| {
            let c = counts.per_mist.get(m).copied().unwrap_or_default();
            MistRow {
                mist_id: m.clone(),
                n_x: graph.fcg_size(m),
                counts: c,
                metrics: prf(c),
            }
        })
        .collect()
}

/// Serialized evaluation report; P/R/F1 are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub counts: Counts,
    pub per_mist: Vec<MistReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistReportRow {
    pub mist_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_x: usize,
}

fn pct(v: f64) -> f64 {
    100.0 * v
}

pub fn build_report(counts: &ConfusionCounts, graph: &MisinfoKnowledgeGraph) -> MetricReport {
    let micro = micro_prf(counts);
    MetricReport {
        precision: pct(micro.precision),
        recall: pct(micro.recall),
        f1: pct(micro.f1),
        degenerate: micro.degenerate,
        counts: counts.global,
        per_mist: per_mist_report(counts, graph)
            .into_iter()
            .map(|r| MistReportRow {
                mist_id: r.mist_id,
                precision: pct(r.metrics.precision),
                recall: pct(r.metrics.recall),
                f1: pct(r.metrics.f1),
                n_x: r.n_x,
            })
            .collect(),
    }
}

/// Fixed-width table in the style of a per-target results table.
pub fn format_report(report: &MetricReport) -> String {
    let mut s = format!(
        "micro P={:.1} R={:.1} F1={:.1} (tp={} fp={} fn={})\n",
        report.precision, report.recall, report.f1, report.counts.tp, report.counts.fp, report.counts.fn_
    );
    s.push_str(&format!("{:<16} {:>6} {:>6} {:>6} {:>6}\n", "mist", "P", "R", "F1", "n_x"));
    for r in &report.per_mist {
        s.push_str(&format!(
            "{:<16} {:>6.1} {:>6.1} {:>6.1} {:>6}\n",
            r.mist_id, r.precision, r.recall, r.f1, r.n_x
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gold(t: &str, rel: &[&str], non: &[&str]) -> Vec<RelevanceJudgment> {
        rel.iter()
            .map(|m| RelevanceJudgment::new(t, *m, true))
            .chain(non.iter().map(|m| RelevanceJudgment::new(t, *m, false)))
            .collect()
    }

    #[test]
    fn single_hit() {
        let c = count(&[Prediction::new("t", ["A"])], &gold("t", &["A"], &[])).unwrap();
        assert_eq!(c.global, Counts { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn wrong_target_is_fp_and_fn() {
        let c = count(&[Prediction::new("t", ["B"])], &gold("t", &["A"], &["B"])).unwrap();
        assert_eq!(c.global, Counts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(c.per_mist["A"].fn_, 1);
        assert_eq!(c.per_mist["B"].fp, 1);
    }

    #[test]
    fn multi_label() {
        let c = count(&[Prediction::new("t", ["A", "B", "D"])], &gold("t", &["A", "B", "C"], &[])).unwrap();
        assert_eq!(c.global, Counts { tp: 2, fp: 1, fn_: 1 });
    }

    #[test]
    fn unknown_tweet_errors() {
        assert!(count(&[Prediction::new("x", ["A"])], &gold("t", &["A"], &[])).is_err());
    }

    #[test]
    fn degenerate_zeroes() {
        let m = prf(Counts::default());
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn f1_of_rounded_pairs() {
        let round1 = |v: f64| (v * 10.0).round() / 10.0;
        assert_eq!(round1(f1_score(77.8, 87.5)), 82.4);
        assert_eq!(round1(f1_score(80.2, 82.2)), 81.2);
        // Rounded inputs can land on the other side of a rounding boundary:
        // 82.4 / 86.4 gives 84.353, although 82.35 / 86.35 gives 84.305.
        assert_eq!(round1(f1_score(82.4, 86.4)), 84.4);
        assert_eq!(round1(f1_score(82.35, 86.35)), 84.3);
    }
}
