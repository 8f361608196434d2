//! Run configuration: one strict JSON document. Unknown keys are rejected
//! so a typo in an ablation sweep fails loudly instead of silently using a
//! default, and the closed option sets are enforced after parsing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{ModelConfig, ModelVariant};
use crate::embed::AggMode;
use crate::scene::DatasetConfig;

use super::{HarnessError, HarnessResult};

/// The fixed evaluation seed set for the multi-seed role protocol.
pub const EVAL_SEEDS: [u64; 10] = [17, 33, 66, 74, 98, 137, 265, 314, 590, 788];

/// Learning rates the verb stage may use.
const VERB_LRS: [f64; 2] = [1e-4, 3e-5];

/// Dataset geometry and split sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Clips generated per base verb; the total is eight times this.
    pub clips_per_verb: usize,
    pub f1: u32,
    pub f2: u32,
    pub raw_w: u32,
    pub raw_h: u32,
    pub grid_w: u32,
    pub grid_h: u32,
    pub d1: u32,
    pub d2: u32,
    pub sigma_bg: f64,
    pub max_objects: usize,
    /// Leading clips used for training; must end on a video boundary.
    pub train_clips: usize,
    /// Trailing clips held out for validation.
    pub val_clips: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            clips_per_verb: 300,
            f1: 4,
            f2: 16,
            raw_w: 64,
            raw_h: 64,
            grid_w: 8,
            grid_h: 8,
            d1: 32,
            d2: 8,
            sigma_bg: 0.05,
            max_objects: 2,
            train_clips: 2000,
            val_clips: 400,
        }
    }
}

impl DatasetSection {
    pub fn to_generator(&self) -> DatasetConfig {
        DatasetConfig {
            clips_per_verb: self.clips_per_verb,
            f1: self.f1,
            f2: self.f2,
            raw_w: self.raw_w,
            raw_h: self.raw_h,
            grid_w: self.grid_w,
            grid_h: self.grid_h,
            d1: self.d1,
            d2: self.d2,
            sigma_bg: self.sigma_bg,
            max_objects: self.max_objects,
        }
    }

    pub fn total_clips(&self) -> usize {
        self.to_generator().total_clips()
    }
}

/// Verb-model structure: variant, aggregator, object cap, and widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: String,
    pub aggregator: String,
    pub o_max: usize,
    pub d_c: usize,
    pub d_m: usize,
    pub heads: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: "ose-pixel/disp+ome+oie".into(),
            aggregator: "mean".into(),
            o_max: 8,
            d_c: 8,
            d_m: 64,
            heads: 4,
        }
    }
}

impl ModelSection {
    pub fn to_model_config(&self) -> HarnessResult<ModelConfig> {
        let variant = ModelVariant::from_name(&self.variant).ok_or_else(|| {
            HarnessError::Config {
                field: "model.variant".into(),
                why: format!(
                    "unknown variant {:?}; expected one of ose-pixel+ome, \
                     ose-pixel/disp+ome, ose-pixel/disp+ome+oie",
                    self.variant
                ),
            }
        })?;
        let agg = AggMode::from_name(&self.aggregator).ok_or_else(|| HarnessError::Config {
            field: "model.aggregator".into(),
            why: format!("unknown aggregator {:?}; expected mean or lstm", self.aggregator),
        })?;
        Ok(ModelConfig {
            d_c: self.d_c,
            d_m: self.d_m,
            heads: self.heads,
            o_max: self.o_max,
            agg,
            variant,
        })
    }
}

/// Verb-stage optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection {
            lr: 1e-4,
            batch_size: 8,
            epochs: 10,
        }
    }
}

/// Role-stage decoder shape and optimizer settings. The role stage overfits
/// small caption sets in a few hundred steps, which needs a larger step
/// size than the verb stage's schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleSection {
    pub d_m: usize,
    pub heads: usize,
    pub max_len: usize,
    pub lr: f64,
    pub steps: usize,
    /// Videos per optimizer step.
    pub batch_videos: usize,
}

impl Default for RoleSection {
    fn default() -> Self {
        RoleSection {
            d_m: 64,
            heads: 4,
            max_len: 24,
            lr: 1e-2,
            steps: 300,
            batch_videos: 8,
        }
    }
}

impl RoleSection {
    pub fn to_role_config(&self) -> crate::decoder::RoleConfig {
        crate::decoder::RoleConfig {
            d_m: self.d_m,
            heads: self.heads,
            max_len: self.max_len,
        }
    }
}

/// One experiment, fully determined: dataset, model, optimizers, the master
/// seed, and the evaluation seed list. Serialized into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub optim: OptimSection,
    pub role: RoleSection,
    pub eval_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            dataset: DatasetSection::default(),
            model: ModelSection::default(),
            optim: OptimSection::default(),
            role: RoleSection::default(),
            eval_seeds: EVAL_SEEDS.to_vec(),
        }
    }
}

fn bad(field: &str, why: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        why: why.into(),
    }
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> HarnessResult<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| bad("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> HarnessResult<()> {
        let text = serde_json::to_string_pretty(self)?;
        Ok(std::fs::write(path, text)?)
    }

    /// Enforces the closed option sets and the structural constraints the
    /// pipeline depends on. Every violation names the offending field.
    pub fn validate(&self) -> HarnessResult<()> {
        self.model.to_model_config()?;
        if ![2usize, 4, 8].contains(&self.model.o_max) {
            return Err(bad("model.o_max", "must be one of 2, 4, 8"));
        }
        if self.model.d_m == 0 || self.model.heads == 0 || self.model.d_m % self.model.heads != 0 {
            return Err(bad("model.heads", "head count must divide token width"));
        }
        if !VERB_LRS.contains(&self.optim.lr) {
            return Err(bad("optim.lr", "must be 1e-4 or 3e-5"));
        }
        if self.optim.batch_size != 8 {
            return Err(bad("optim.batch_size", "training uses batches of 8"));
        }
        if self.optim.epochs == 0 || self.optim.epochs > 10 {
            return Err(bad("optim.epochs", "must be between 1 and 10"));
        }
        let d = &self.dataset;
        if d.clips_per_verb == 0 {
            return Err(bad("dataset.clips_per_verb", "must be positive"));
        }
        if d.f1 == 0 || d.f2 == 0 || d.f2 % d.f1 != 0 {
            return Err(bad("dataset.f2", "fast frame count must be a multiple of f1"));
        }
        if (d.d1 + d.d2) % 2 != 0 {
            return Err(bad(
                "dataset.d2",
                "pathway widths must sum to an even verb-head bottleneck base",
            ));
        }
        if d.train_clips == 0 || d.val_clips == 0 {
            return Err(bad("dataset.train_clips", "both splits must be nonempty"));
        }
        if d.train_clips % 5 != 0 || d.val_clips % 5 != 0 {
            return Err(bad(
                "dataset.train_clips",
                "splits must respect the five-clip video boundary",
            ));
        }
        if d.train_clips + d.val_clips != d.total_clips() {
            return Err(bad(
                "dataset.val_clips",
                format!(
                    "train + val must cover the {} generated clips",
                    d.total_clips()
                ),
            ));
        }
        let r = &self.role;
        if r.d_m == 0 || r.heads == 0 || r.d_m % r.heads != 0 {
            return Err(bad("role.heads", "head count must divide decoder width"));
        }
        if r.max_len < 3 {
            return Err(bad("role.max_len", "must fit BOS, a verb, and EOS"));
        }
        if !(r.lr > 0.0) {
            return Err(bad("role.lr", "must be positive"));
        }
        if r.steps == 0 {
            return Err(bad("role.steps", "must be positive"));
        }
        if r.batch_videos == 0 {
            return Err(bad("role.batch_videos", "must be positive"));
        }
        if self.eval_seeds.is_empty() {
            return Err(bad("eval_seeds", "must list at least one seed"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.eval_seeds {
            if !seen.insert(*s) {
                return Err(bad("eval_seeds", format!("seed {s} listed twice")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let config = ExperimentConfig::default();
        config.validate().unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.dataset.train_clips, 2000);
        assert_eq!(config.dataset.val_clips, 400);
        assert_eq!(config.eval_seeds, EVAL_SEEDS.to_vec());
    }

    #[test]
    fn empty_document_means_all_defaults() {
        let config = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(config, ExperimentConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_field_name() {
        let err = ExperimentConfig::from_json(r#"{"optim": {"learning_rate": 0.1}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rate"), "{msg}");
    }

    #[test]
    fn closed_sets_are_enforced() {
        let cases = [
            (r#"{"model": {"variant": "resnet"}}"#, "model.variant"),
            (r#"{"model": {"aggregator": "max"}}"#, "model.aggregator"),
            (r#"{"model": {"o_max": 3}}"#, "model.o_max"),
            (r#"{"optim": {"lr": 0.01}}"#, "optim.lr"),
            (r#"{"optim": {"batch_size": 16}}"#, "optim.batch_size"),
            (r#"{"optim": {"epochs": 11}}"#, "optim.epochs"),
        ];
        for (doc, field) in cases {
            let err = ExperimentConfig::from_json(doc).unwrap_err();
            assert!(err.to_string().contains(field), "{doc} -> {err}");
        }
    }

    #[test]
    fn both_allowed_learning_rates_pass() {
        for lr in ["1e-4", "3e-5", "0.0001", "0.00003"] {
            let doc = format!(r#"{{"optim": {{"lr": {lr}}}}}"#);
            ExperimentConfig::from_json(&doc).unwrap();
        }
    }

    #[test]
    fn split_must_cover_the_generated_clips() {
        let doc = r#"{"dataset": {"clips_per_verb": 10, "train_clips": 60, "val_clips": 15}}"#;
        let err = ExperimentConfig::from_json(doc).unwrap_err();
        assert!(err.to_string().contains("val_clips"), "{err}");
        let ok = r#"{"dataset": {"clips_per_verb": 10, "train_clips": 60, "val_clips": 20}}"#;
        ExperimentConfig::from_json(ok).unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = ExperimentConfig::default();
        let text = serde_json::to_string(&config).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn duplicate_eval_seeds_are_rejected() {
        let doc = r#"{"eval_seeds": [1, 2, 1]}"#;
        let err = ExperimentConfig::from_json(doc).unwrap_err();
        assert!(err.to_string().contains("eval_seeds"));
    }
}
