//! Caption-style phrase metrics: CIDEr-D (clipped TF-IDF n-gram cosine,
//! n = 1..4, Gaussian length penalty, scaled by 10) and ROUGE-L (longest
//! common subsequence F-measure with recall bias).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scene::Role;

use super::text::{ngram_counts, tokenize};
use super::{MetricsError, MetricsResult};

/// Highest n-gram order scored by CIDEr-D.
pub const CIDER_MAX_N: usize = 4;
/// Width of the Gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;
/// Recall weight in the ROUGE-L F-measure.
pub const ROUGE_BETA: f64 = 1.2;

/// One scored phrase: a candidate against its reference set, tagged with
/// the role slot and gold verb sense for grouped averaging.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoleEvalRecord {
    pub clip_id: String,
    pub role: Role,
    pub candidate: String,
    pub references: Vec<String>,
    pub verb: String,
}

/// How per-record CIDEr-D scores are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Mean over every record.
    Micro,
    /// Mean within each gold verb sense, then mean across senses.
    ByVerb,
    /// Mean within each role slot, then mean across slots.
    ByArg,
}

/// Per-order TF-IDF vectors for one phrase, with norms and token length.
struct TfIdf {
    vecs: Vec<BTreeMap<String, f64>>,
    norms: Vec<f64>,
    len: usize,
}

/// Document frequencies over the reference corpus. An n-gram absent from
/// every document keeps the full `ln(docs)` weight (its frequency is
/// floored at one), so unseen candidate grams still dilute the cosine.
struct Corpus {
    df: Vec<BTreeMap<String, f64>>,
    log_docs: f64,
}

impl Corpus {
    fn idf(&self, n: usize, gram: &str) -> f64 {
        let d = self.df[n - 1].get(gram).copied().unwrap_or(0.0);
        self.log_docs - d.max(1.0).ln()
    }
}

fn tfidf(tokens: &[String], corpus: &Corpus) -> TfIdf {
    let mut vecs = Vec::with_capacity(CIDER_MAX_N);
    let mut norms = Vec::with_capacity(CIDER_MAX_N);
    for n in 1..=CIDER_MAX_N {
        let mut vec = ngram_counts(tokens, n);
        let mut norm = 0.0;
        for (gram, count) in vec.iter_mut() {
            *count *= corpus.idf(n, gram);
            norm += *count * *count;
        }
        vecs.push(vec);
        norms.push(norm.sqrt());
    }
    TfIdf {
        vecs,
        norms,
        len: tokens.len(),
    }
}

/// Clipped cosine per order between candidate and one reference, each
/// order damped by the length-difference Gaussian, averaged over orders.
fn similarity(cand: &TfIdf, reference: &TfIdf) -> f64 {
    let delta = cand.len as f64 - reference.len as f64;
    let damp = (-delta * delta / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut total = 0.0;
    for n in 0..CIDER_MAX_N {
        let mut dot = 0.0;
        for (gram, &cw) in &cand.vecs[n] {
            let rw = reference.vecs[n].get(gram).copied().unwrap_or(0.0);
            dot += cw.min(rw) * rw;
        }
        if cand.norms[n] > 0.0 && reference.norms[n] > 0.0 {
            total += damp * dot / (cand.norms[n] * reference.norms[n]);
        }
    }
    total / CIDER_MAX_N as f64
}

/// CIDEr-D over the record set. The IDF corpus is the full record list
/// (one document per record: the union of its reference phrases),
/// regardless of grouping.
pub fn cider_d(records: &[RoleEvalRecord], grouping: Grouping) -> MetricsResult<f64> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    for r in records {
        if r.references.is_empty() {
            return Err(MetricsError::EmptyReferences {
                clip_id: r.clip_id.clone(),
            });
        }
    }

    // Document frequency: a record counts once per n-gram appearing in
    // any of its references.
    let mut df: Vec<BTreeMap<String, f64>> = vec![BTreeMap::new(); CIDER_MAX_N];
    let ref_tokens: Vec<Vec<Vec<String>>> = records
        .iter()
        .map(|r| r.references.iter().map(|s| tokenize(s)).collect())
        .collect();
    for refs in &ref_tokens {
        for n in 1..=CIDER_MAX_N {
            let mut seen: BTreeMap<String, ()> = BTreeMap::new();
            for toks in refs {
                for gram in ngram_counts(toks, n).into_keys() {
                    seen.entry(gram).or_insert(());
                }
            }
            for gram in seen.into_keys() {
                *df[n - 1].entry(gram).or_insert(0.0) += 1.0;
            }
        }
    }
    let corpus = Corpus {
        df,
        log_docs: (records.len() as f64).ln(),
    };

    let mut scores = Vec::with_capacity(records.len());
    for (r, refs) in records.iter().zip(&ref_tokens) {
        let cand_tokens = tokenize(&r.candidate);
        if cand_tokens.is_empty() {
            scores.push(0.0);
            continue;
        }
        let cand = tfidf(&cand_tokens, &corpus);
        let mut total = 0.0;
        for toks in refs {
            total += similarity(&cand, &tfidf(toks, &corpus));
        }
        scores.push(10.0 * total / refs.len() as f64);
    }

    Ok(match grouping {
        Grouping::Micro => scores.iter().sum::<f64>() / scores.len() as f64,
        Grouping::ByVerb => {
            grouped_mean(records.iter().map(|r| r.verb.clone()).zip(scores))
        }
        Grouping::ByArg => {
            grouped_mean(records.iter().map(|r| r.role.to_string()).zip(scores))
        }
    })
}

fn grouped_mean(pairs: impl Iterator<Item = (String, f64)>) -> f64 {
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (key, score) in pairs {
        let slot = groups.entry(key).or_insert((0.0, 0));
        slot.0 += score;
        slot.1 += 1;
    }
    let k = groups.len() as f64;
    groups.values().map(|(sum, n)| sum / *n as f64).sum::<f64>() / k
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: per record, the F-measure of the best per-reference LCS
/// precision and recall, averaged over records.
pub fn rouge_l(records: &[RoleEvalRecord]) -> MetricsResult<f64> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut total = 0.0;
    for r in records {
        if r.references.is_empty() {
            return Err(MetricsError::EmptyReferences {
                clip_id: r.clip_id.clone(),
            });
        }
        let cand = tokenize(&r.candidate);
        if cand.is_empty() {
            continue;
        }
        let mut best_p = 0.0f64;
        let mut best_r = 0.0f64;
        for reference in &r.references {
            let toks = tokenize(reference);
            if toks.is_empty() {
                continue;
            }
            let l = lcs_len(&cand, &toks) as f64;
            best_p = best_p.max(l / cand.len() as f64);
            best_r = best_r.max(l / toks.len() as f64);
        }
        if best_p > 0.0 && best_r > 0.0 {
            let b2 = ROUGE_BETA * ROUGE_BETA;
            total += (1.0 + b2) * best_p * best_r / (best_r + b2 * best_p);
        }
    }
    Ok(total / records.len() as f64)
}
