//! Verb-classification metrics over ranked predictions: Accuracy@K plus
//! macro-averaged per-verb Recall@5 and F1@5.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{MetricsError, MetricsResult};

/// One clip's verb evaluation row: the acceptable ground-truth verbs and
/// the model's ranked predictions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerbEvalRecord {
    pub clip_id: String,
    /// Acceptable verbs; a prediction counts if it appears at least once.
    pub gt_verbs: Vec<String>,
    /// Predictions in rank order, best first.
    pub predictions: Vec<String>,
}

impl VerbEvalRecord {
    fn check(&self) -> MetricsResult<()> {
        if self.gt_verbs.is_empty() {
            return Err(MetricsError::EmptyGroundTruth {
                clip_id: self.clip_id.clone(),
            });
        }
        Ok(())
    }

    fn top(&self, k: usize) -> &[String] {
        &self.predictions[..k.min(self.predictions.len())]
    }

    fn hit(&self, k: usize) -> bool {
        self.top(k).iter().any(|p| self.gt_verbs.contains(p))
    }
}

/// Per-verb tallies at a fixed cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct VerbStats {
    pub verb: String,
    /// Clips whose ground truth contains the verb.
    pub support: usize,
    /// Clips where the verb is both in the ground truth and predicted.
    pub hits: usize,
    /// Clips where the verb appears in the predictions.
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Fraction of clips whose top-K predictions contain any acceptable verb.
pub fn acc_at_k(records: &[VerbEvalRecord], k: usize) -> MetricsResult<f64> {
    if k == 0 {
        return Err(MetricsError::BadK);
    }
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut hits = 0usize;
    for r in records {
        r.check()?;
        if r.hit(k) {
            hits += 1;
        }
    }
    Ok(hits as f64 / records.len() as f64)
}

/// Per-verb precision/recall/F1 at the top-5 cutoff, one row per verb
/// that occurs in any clip's ground truth, in verb order.
pub fn verb_breakdown(records: &[VerbEvalRecord]) -> MetricsResult<Vec<VerbStats>> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut support: BTreeMap<&str, usize> = BTreeMap::new();
    let mut hits: BTreeMap<&str, usize> = BTreeMap::new();
    let mut predicted: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        r.check()?;
        let gt: BTreeSet<&str> = r.gt_verbs.iter().map(String::as_str).collect();
        let top: BTreeSet<&str> = r.top(5).iter().map(String::as_str).collect();
        for v in &gt {
            *support.entry(v).or_insert(0) += 1;
            if top.contains(v) {
                *hits.entry(v).or_insert(0) += 1;
            }
        }
        for v in &top {
            *predicted.entry(v).or_insert(0) += 1;
        }
    }
    Ok(support
        .iter()
        .map(|(&verb, &sup)| {
            let h = hits.get(verb).copied().unwrap_or(0);
            let p = predicted.get(verb).copied().unwrap_or(0);
            let recall = h as f64 / sup as f64;
            let precision = if p == 0 { 0.0 } else { h as f64 / p as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            VerbStats {
                verb: verb.to_string(),
                support: sup,
                hits: h,
                predicted: p,
                precision,
                recall,
                f1,
            }
        })
        .collect())
}

/// Macro recall at 5: the mean over ground-truth verbs of the fraction of
/// their clips where the verb makes the top 5.
pub fn rec_at_5(records: &[VerbEvalRecord]) -> MetricsResult<f64> {
    let rows = verb_breakdown(records)?;
    Ok(rows.iter().map(|r| r.recall).sum::<f64>() / rows.len() as f64)
}

/// Macro F1 at 5: the mean over ground-truth verbs of the harmonic mean
/// of per-verb precision and recall; never-predicted verbs score zero.
pub fn f1_at_5(records: &[VerbEvalRecord]) -> MetricsResult<f64> {
    let rows = verb_breakdown(records)?;
    Ok(rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64)
}
