//! Seeded training loops. All randomness flows from one seed through a
//! counter-based generator, batches walk precomputed inputs, and every
//! optimizer step's loss is recorded so two identical runs can be compared
//! curve for curve.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decoder::{
    register_role_params, teacher_forced_loss, FrozenVideo, RoleConfig, RoleVocab,
};
use crate::encoder::{
    classify_verb, encode_prepared, register_model_params, verb_loss, ModelConfig,
};
use crate::scene::VerbOntology;
use crate::tensor::{AdamState, ParamStore, Tape};

use super::data::{role_targets, VerbExample};
use super::eval::evaluate_roles;
use super::report::mean_std;
use super::{ExperimentConfig, HarnessError, HarnessResult};

/// A trained verb model with its loss trajectory.
pub struct TrainedVerbModel {
    pub store: ParamStore,
    pub model_cfg: ModelConfig,
    /// Mean loss of each optimizer step, in order.
    pub batch_losses: Vec<f64>,
    /// Mean loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub secs: f64,
}

/// Trains the verb stage: shuffled batches of eight clips, one adaptive
/// step per batch, for the configured number of epochs.
pub fn train_verb(
    config: &ExperimentConfig,
    train: &[VerbExample],
) -> HarnessResult<TrainedVerbModel> {
    if train.is_empty() {
        return Err(HarnessError::Data {
            why: "verb training needs at least one clip".into(),
        });
    }
    let start = Instant::now();
    let model_cfg = config.model.to_model_config()?;
    let ontology = VerbOntology::desk();
    let mut store = ParamStore::new(config.seed);
    register_model_params(
        &mut store,
        &model_cfg,
        config.dataset.d1 as usize,
        config.dataset.d2 as usize,
        ontology.num_labels(),
    )?;
    let mut adam = AdamState::new(config.optim.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch_losses = Vec::new();
    let mut epoch_losses = Vec::new();
    for _ in 0..config.optim.epochs {
        order.shuffle(&mut rng);
        let epoch_start = batch_losses.len();
        for batch in order.chunks(config.optim.batch_size) {
            store.zero_grads();
            let inv = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &ix in batch {
                let example = &train[ix];
                let mut tape = Tape::new();
                let emb = encode_prepared(&mut tape, &store, &model_cfg, &example.prep)?;
                let pred = classify_verb(&mut tape, &store, emb.e)?;
                let loss = verb_loss(&mut tape, &pred, example.label)?;
                batch_loss += tape.data(loss)[0];
                let scaled = tape.scale(loss, inv)?;
                tape.backward(scaled)?;
                tape.export_grads(&mut store)?;
            }
            adam.step(&mut store)?;
            batch_losses.push(batch_loss * inv);
        }
        let epoch = &batch_losses[epoch_start..];
        epoch_losses.push(epoch.iter().sum::<f64>() / epoch.len() as f64);
    }
    Ok(TrainedVerbModel {
        store,
        model_cfg,
        batch_losses,
        epoch_losses,
        secs: start.elapsed().as_secs_f64(),
    })
}

/// A trained role decoder with its loss trajectory.
pub struct TrainedRoleModel {
    pub store: ParamStore,
    pub role_cfg: RoleConfig,
    /// Mean teacher-forced loss of each optimizer step.
    pub step_losses: Vec<f64>,
    pub secs: f64,
}

fn check_videos(videos: &[FrozenVideo]) -> HarnessResult<()> {
    if videos.is_empty() {
        return Err(HarnessError::Data {
            why: "role training needs at least one frozen video".into(),
        });
    }
    if let Some(v) = videos.iter().find(|v| !v.frozen) {
        return Err(HarnessError::Data {
            why: format!("video {} was not produced by the freeze pass", v.video_id),
        });
    }
    Ok(())
}

/// Trains the role decoder on frozen videos with the given init/shuffle
/// seed. Gradients only ever reach decoder and contextualizer parameters:
/// the encoder's outputs enter as cached constants.
pub fn train_role(
    config: &ExperimentConfig,
    videos: &[FrozenVideo],
    seed: u64,
) -> HarnessResult<TrainedRoleModel> {
    check_videos(videos)?;
    let start = Instant::now();
    let role_cfg = config.role.to_role_config();
    let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
    let fused_dim = crate::decoder::fused_width(&videos[0].clips[0]);
    let mut store = ParamStore::new(seed);
    register_role_params(&mut store, &role_cfg, fused_dim, vocab.len())?;
    let targets: Vec<Vec<Vec<usize>>> = videos
        .iter()
        .map(|video| role_targets(&vocab, video))
        .collect::<HarnessResult<_>>()?;
    let mut adam = AdamState::new(config.role.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = config.role.batch_videos.min(videos.len());
    let mut order: Vec<usize> = (0..videos.len()).collect();
    let mut cursor = order.len();
    let mut step_losses = Vec::with_capacity(config.role.steps);
    for _ in 0..config.role.steps {
        if cursor + batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let chosen = &order[cursor..cursor + batch];
        cursor += batch;
        store.zero_grads();
        let inv = 1.0 / batch as f64;
        let mut step_loss = 0.0;
        for &ix in chosen {
            let mut tape = Tape::new();
            let loss = teacher_forced_loss(&mut tape, &store, &role_cfg, &videos[ix], &targets[ix])?;
            step_loss += tape.data(loss)[0];
            let scaled = tape.scale(loss, inv)?;
            tape.backward(scaled)?;
            tape.export_grads(&mut store)?;
        }
        adam.step(&mut store)?;
        step_losses.push(step_loss * inv);
    }
    Ok(TrainedRoleModel {
        store,
        role_cfg,
        step_losses,
        secs: start.elapsed().as_secs_f64(),
    })
}

/// Mean teacher-forced loss over a whole video set, without training.
pub fn teacher_forced_set_loss(
    store: &ParamStore,
    role_cfg: &RoleConfig,
    videos: &[FrozenVideo],
) -> HarnessResult<f64> {
    check_videos(videos)?;
    let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
    let mut total = 0.0;
    for video in videos {
        let targets = role_targets(&vocab, video)?;
        let mut tape = Tape::new();
        let loss = teacher_forced_loss(&mut tape, store, role_cfg, video, &targets)?;
        total += tape.data(loss)[0];
    }
    Ok(total / videos.len() as f64)
}

/// Outcome of the multi-seed role protocol: every per-seed metric value,
/// and their mean/std summary.
pub struct SeedProtocol {
    /// Metric name → one value per evaluation seed, in seed-list order.
    pub per_seed: BTreeMap<String, Vec<f64>>,
    /// `{metric}_mean` and `{metric}_std` over the per-seed values.
    pub summary: BTreeMap<String, f64>,
}

/// Runs the full multi-seed protocol: for every seed in the config's list,
/// trains a role decoder from that seed on the train videos and scores its
/// captions on the validation videos.
pub fn role_seed_protocol(
    config: &ExperimentConfig,
    train_videos: &[FrozenVideo],
    val_videos: &[FrozenVideo],
) -> HarnessResult<SeedProtocol> {
    check_videos(train_videos)?;
    check_videos(val_videos)?;
    let mut per_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &seed in &config.eval_seeds {
        let trained = train_role(config, train_videos, seed)?;
        let eval = evaluate_roles(&trained.store, &trained.role_cfg, val_videos)?;
        per_seed.entry("cider_d".into()).or_default().push(eval.cider);
        per_seed.entry("rouge_l".into()).or_default().push(eval.rouge);
    }
    let mut summary = BTreeMap::new();
    for (name, values) in &per_seed {
        let (mean, std) = mean_std(values);
        summary.insert(format!("{name}_mean"), mean);
        summary.insert(format!("{name}_std"), std);
    }
    Ok(SeedProtocol { per_seed, summary })
}
