//! Experiment driver: strict run configuration, dataset splitting and
//! preparation, seeded verb/role training loops, evaluation with report
//! files, the channel-ablation matrix, and inspection dumps.

mod ablate;
mod config;
mod data;
mod eval;
mod inspect;
mod report;
mod train;

pub use ablate::{ablation_configs, run_ablation, AGGREGATOR_AXIS, O_MAX_AXIS, VARIANT_AXIS};
pub use config::{
    DatasetSection, ExperimentConfig, ModelSection, OptimSection, RoleSection, EVAL_SEEDS,
};
pub use data::{
    freeze_videos, group_videos, prepare_clips, role_targets, split_dataset, FeatureSource,
    LabeledDataset, VerbExample,
};
pub use eval::{
    evaluate_roles, evaluate_verb, greedy_exact_fraction, subset_acc1, write_metrics_json,
    write_verb_csv, RoleEvaluation, VerbEvaluation,
};
pub use inspect::{write_attention_csv, write_state_csv};
pub use report::{
    load_params, mean_std, report_file_name, save_params, source_hash, write_report, RunReport,
};
pub use train::{
    role_seed_protocol, teacher_forced_set_loss, train_role, train_verb, SeedProtocol,
    TrainedRoleModel, TrainedVerbModel,
};

use thiserror::Error;

use crate::decoder::DecoderError;
use crate::encoder::EncoderError;
use crate::metrics::MetricsError;
use crate::scene::SceneError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {why}")]
    Config { field: String, why: String },
    #[error("dataset: {why}")]
    Data { why: String },
    #[error("no clip with id {clip_id}")]
    MissingClip { clip_id: String },
    #[error("model directory {dir} is missing {file}")]
    MissingModelFile { dir: String, file: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type HarnessResult<T> = Result<T, HarnessError>;
