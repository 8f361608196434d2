//! Scoring trained models on held-out clips, and writing the results as
//! JSON and CSV.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::decoder::{greedy_decode, FrozenVideo, RoleConfig, RoleVocab};
use crate::encoder::{classify_verb, encode_prepared, topk_verbs, ModelConfig};
use crate::metrics::{
    acc_at_k, cider_d, f1_at_5, rec_at_5, rouge_l, verb_breakdown, Grouping, RoleEvalRecord,
    VerbEvalRecord, VerbStats,
};
use crate::scene::VerbOntology;
use crate::tensor::{ParamStore, Tape};

use super::data::VerbExample;
use super::{HarnessError, HarnessResult};

/// Verb-stage scores over one split.
pub struct VerbEvaluation {
    pub records: Vec<VerbEvalRecord>,
    /// Canonical gold verb of each record, aligned with `records`.
    pub verbs: Vec<String>,
    pub acc1: f64,
    pub acc5: f64,
    pub rec5: f64,
    pub f15: f64,
    pub stats: Vec<VerbStats>,
}

/// Runs the verb classifier over every clip and scores the ranked label
/// lists against the acceptable-verb sets.
pub fn evaluate_verb(
    store: &ParamStore,
    cfg: &ModelConfig,
    examples: &[VerbExample],
) -> HarnessResult<VerbEvaluation> {
    if examples.is_empty() {
        return Err(HarnessError::Data {
            why: "verb evaluation needs at least one clip".into(),
        });
    }
    let ontology = VerbOntology::desk();
    let names = ontology.all_names();
    let mut records = Vec::with_capacity(examples.len());
    let mut verbs = Vec::with_capacity(examples.len());
    for example in examples {
        let mut tape = Tape::new();
        let emb = encode_prepared(&mut tape, store, cfg, &example.prep)?;
        let pred = classify_verb(&mut tape, store, emb.e)?;
        let probs = tape.data(pred.probs);
        let predictions = topk_verbs(probs, 5)
            .into_iter()
            .map(|ix| names[ix].to_string())
            .collect();
        records.push(VerbEvalRecord {
            clip_id: example.prep.clip_id.clone(),
            gt_verbs: example.prep.annotation.gt_verbs.clone(),
            predictions,
        });
        verbs.push(example.prep.annotation.verb.clone());
    }
    Ok(VerbEvaluation {
        acc1: acc_at_k(&records, 1)?,
        acc5: acc_at_k(&records, 5)?,
        rec5: rec_at_5(&records)?,
        f15: f1_at_5(&records)?,
        stats: verb_breakdown(&records)?,
        records,
        verbs,
    })
}

/// Top-1 accuracy restricted to clips whose canonical gold verb is in
/// `subset`. Errors if the subset matches nothing.
pub fn subset_acc1(eval: &VerbEvaluation, subset: &[&str]) -> HarnessResult<f64> {
    let picked: Vec<VerbEvalRecord> = eval
        .records
        .iter()
        .zip(&eval.verbs)
        .filter(|(_, verb)| subset.contains(&verb.as_str()))
        .map(|(record, _)| record.clone())
        .collect();
    if picked.is_empty() {
        return Err(HarnessError::Data {
            why: format!("no clips match the verb subset {subset:?}"),
        });
    }
    Ok(acc_at_k(&picked, 1)?)
}

/// Role-stage scores over one split.
pub struct RoleEvaluation {
    pub records: Vec<RoleEvalRecord>,
    pub cider: f64,
    pub rouge: f64,
}

/// Greedy-decodes every video with gold verbs and scores the recovered
/// role phrases against the references.
pub fn evaluate_roles(
    store: &ParamStore,
    cfg: &RoleConfig,
    videos: &[FrozenVideo],
) -> HarnessResult<RoleEvaluation> {
    if videos.is_empty() {
        return Err(HarnessError::Data {
            why: "role evaluation needs at least one video".into(),
        });
    }
    let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
    let mut records = Vec::new();
    for video in videos {
        let decoded = greedy_decode(store, cfg, video, &vocab)?;
        for (clip, out) in video.clips.iter().zip(&decoded) {
            let parsed = vocab.parse_decoded(&out.tokens);
            for fill in &clip.annotation.roles {
                records.push(RoleEvalRecord {
                    clip_id: clip.clip_id.clone(),
                    role: fill.role,
                    candidate: parsed.get(&fill.role).cloned().unwrap_or_default(),
                    references: fill.references.clone(),
                    verb: clip.annotation.verb.clone(),
                });
            }
        }
    }
    Ok(RoleEvaluation {
        cider: cider_d(&records, Grouping::Micro)?,
        rouge: rouge_l(&records)?,
        records,
    })
}

/// Fraction of clips whose greedy-decoded token sequence is exactly the
/// serialized gold sequence — verb, role markers, words, and terminator.
pub fn greedy_exact_fraction(
    store: &ParamStore,
    cfg: &RoleConfig,
    videos: &[FrozenVideo],
) -> HarnessResult<f64> {
    if videos.is_empty() {
        return Err(HarnessError::Data {
            why: "exact-match needs at least one video".into(),
        });
    }
    let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
    let mut hits = 0usize;
    let mut total = 0usize;
    for video in videos {
        let decoded = greedy_decode(store, cfg, video, &vocab)?;
        let targets = super::data::role_targets(&vocab, video)?;
        for (out, target) in decoded.iter().zip(&targets) {
            total += 1;
            if out.tokens == *target {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Writes a metric map as pretty JSON.
pub fn write_metrics_json(path: &Path, metrics: &BTreeMap<String, f64>) -> HarnessResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(metrics)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes the per-verb breakdown as CSV.
pub fn write_verb_csv(path: &Path, stats: &[VerbStats]) -> HarnessResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = Vec::new();
    writeln!(out, "verb,support,hits,predicted,precision,recall,f1")?;
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.verb, s.support, s.hits, s.predicted, s.precision, s.recall, s.f1
        )?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::decoder::fused_width;
    use crate::encoder::register_model_params;
    use crate::scene::{generate_dataset, DatasetConfig};

    use super::super::data::{freeze_videos, prepare_clips, FeatureSource};
    use super::super::ExperimentConfig;
    use super::*;

    fn fixtures() -> (ExperimentConfig, Vec<crate::scene::ClipRecord>) {
        let mut config = ExperimentConfig::default();
        config.dataset.clips_per_verb = 5;
        config.dataset.train_clips = 30;
        config.dataset.val_clips = 10;
        let clips = generate_dataset(&config.dataset.to_generator(), 7).unwrap();
        (config, clips)
    }

    #[test]
    fn verb_evaluation_scores_an_untrained_model() {
        let (config, clips) = fixtures();
        let cfg = config.model.to_model_config().unwrap();
        let examples = prepare_clips(&cfg, &clips[..20], &FeatureSource::Rendered).unwrap();
        let mut store = crate::tensor::ParamStore::new(1);
        register_model_params(&mut store, &cfg, 32, 8, 24).unwrap();
        let eval = evaluate_verb(&store, &cfg, &examples).unwrap();
        assert_eq!(eval.records.len(), 20);
        assert_eq!(eval.verbs.len(), 20);
        for (record, verb) in eval.records.iter().zip(&eval.verbs) {
            assert_eq!(record.predictions.len(), 5);
            assert_eq!(&record.gt_verbs[0], verb);
        }
        for value in [eval.acc1, eval.acc5, eval.rec5, eval.f15] {
            assert!((0.0..=1.0).contains(&value));
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let (config, clips) = fixtures();
        let cfg = config.model.to_model_config().unwrap();
        let examples = prepare_clips(&cfg, &clips[..20], &FeatureSource::Rendered).unwrap();
        let mut store = crate::tensor::ParamStore::new(1);
        register_model_params(&mut store, &cfg, 32, 8, 24).unwrap();
        let mut eval = evaluate_verb(&store, &cfg, &examples).unwrap();
        for record in &mut eval.records {
            record.predictions[0] = record.gt_verbs[0].clone();
        }
        assert_eq!(acc_at_k(&eval.records, 1).unwrap(), 1.0);
    }

    #[test]
    fn subset_accuracy_uses_only_matching_clips() {
        let (config, clips) = fixtures();
        let cfg = config.model.to_model_config().unwrap();
        let examples = prepare_clips(&cfg, &clips[..40], &FeatureSource::Rendered).unwrap();
        let mut store = crate::tensor::ParamStore::new(1);
        register_model_params(&mut store, &cfg, 32, 8, 24).unwrap();
        let mut eval = evaluate_verb(&store, &cfg, &examples).unwrap();
        // Force every "fall" clip right and every other clip wrong.
        for (record, verb) in eval.records.iter_mut().zip(&eval.verbs) {
            record.predictions = if verb == "fall" {
                vec![verb.clone()]
            } else {
                vec!["idle".to_string(); 1]
            };
        }
        for (record, verb) in eval.records.iter_mut().zip(&eval.verbs) {
            if verb == "idle" {
                record.predictions = vec!["fall".to_string()];
            }
        }
        let on_fall = subset_acc1(&eval, &["fall"]).unwrap();
        assert_eq!(on_fall, 1.0);
        let on_idle = subset_acc1(&eval, &["idle"]).unwrap();
        assert_eq!(on_idle, 0.0);
        assert!(subset_acc1(&eval, &["no-such-verb"]).is_err());
    }

    #[test]
    fn role_evaluation_covers_every_gold_fill() {
        let (config, clips) = fixtures();
        let cfg = config.model.to_model_config().unwrap();
        let mut verb_store = crate::tensor::ParamStore::new(1);
        register_model_params(&mut verb_store, &cfg, 32, 8, 24).unwrap();
        let videos =
            freeze_videos(&verb_store, &cfg, &clips[..10], &FeatureSource::Rendered).unwrap();
        let role_cfg = config.role.to_role_config();
        let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
        let mut role_store = crate::tensor::ParamStore::new(2);
        crate::decoder::register_role_params(
            &mut role_store,
            &role_cfg,
            fused_width(&videos[0].clips[0]),
            vocab.len(),
        )
        .unwrap();
        let eval = evaluate_roles(&role_store, &role_cfg, &videos).unwrap();
        let gold_fills: usize = videos
            .iter()
            .flat_map(|v| &v.clips)
            .map(|c| c.annotation.roles.len())
            .sum();
        assert_eq!(eval.records.len(), gold_fills);
        assert!(eval.cider >= 0.0);
        assert!((0.0..=1.0).contains(&eval.rouge));
    }

    #[test]
    fn metric_and_csv_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let metrics: BTreeMap<String, f64> =
            [("acc1".to_string(), 0.5), ("f15".to_string(), 0.25)].into();
        let json_path = dir.path().join("metrics.json");
        write_metrics_json(&json_path, &metrics).unwrap();
        let back: BTreeMap<String, f64> =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(back, metrics);

        let stats = vec![VerbStats {
            verb: "fall".into(),
            support: 4,
            hits: 3,
            predicted: 6,
            precision: 0.5,
            recall: 0.75,
            f1: 0.6,
        }];
        let csv_path = dir.path().join("verbs.csv");
        write_verb_csv(&csv_path, &stats).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert_eq!(
            text,
            "verb,support,hits,predicted,precision,recall,f1\nfall,4,3,6,0.5,0.75,0.6\n"
        );
    }
}
