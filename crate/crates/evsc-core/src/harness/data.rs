//! Dataset plumbing between the scene generator and training: the
//! train/val split on video boundaries, one-time preparation of clips into
//! model inputs, video grouping, and role target serialization.

use std::path::PathBuf;

use crate::decoder::{freeze_video, FrozenVideo, RoleVocab, CLIPS_PER_VIDEO};
use crate::encoder::{ModelConfig, PreparedClip};
use crate::scene::{
    load_features, render_grid_features, ClipRecord, GridFeaturePack, VerbOntology,
};
use crate::tensor::ParamStore;

use super::{HarnessError, HarnessResult};

/// Where a clip's rendered features come from: recomputed in memory, or
/// the feature files of a dataset directory.
#[derive(Debug, Clone)]
pub enum FeatureSource {
    Rendered,
    Dir(PathBuf),
}

impl FeatureSource {
    pub fn pack(&self, clip: &ClipRecord) -> HarnessResult<GridFeaturePack> {
        match self {
            FeatureSource::Rendered => Ok(render_grid_features(clip)?),
            FeatureSource::Dir(dir) => Ok(load_features(dir, clip)?),
        }
    }
}

/// The ordered train/val split of one generated dataset.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub train: Vec<ClipRecord>,
    pub val: Vec<ClipRecord>,
}

/// Splits clips into leading train and trailing val runs. The generator
/// interleaves verbs round-robin, so a prefix split keeps both sides
/// verb-balanced; the cut must fall on a video boundary.
pub fn split_dataset(
    clips: Vec<ClipRecord>,
    train_clips: usize,
    val_clips: usize,
) -> HarnessResult<LabeledDataset> {
    if train_clips + val_clips != clips.len() {
        return Err(HarnessError::Data {
            why: format!(
                "split {train_clips}+{val_clips} does not cover {} clips",
                clips.len()
            ),
        });
    }
    if train_clips % CLIPS_PER_VIDEO != 0 || val_clips % CLIPS_PER_VIDEO != 0 {
        return Err(HarnessError::Data {
            why: "split sizes must be multiples of the five-clip video".into(),
        });
    }
    let mut train = clips;
    let val = train.split_off(train_clips);
    if let (Some(last), Some(first)) = (train.last(), val.first()) {
        if last.video_id == first.video_id {
            return Err(HarnessError::Data {
                why: format!("video {} spans the split boundary", last.video_id),
            });
        }
    }
    Ok(LabeledDataset { train, val })
}

/// One clip ready for the verb stage: precomputed inputs plus the gold
/// label index.
#[derive(Debug, Clone)]
pub struct VerbExample {
    pub prep: PreparedClip,
    pub label: usize,
}

/// Prepares every clip once: renders or loads its features, pools all
/// parameter-free inputs, and resolves the gold verb label.
pub fn prepare_clips(
    cfg: &ModelConfig,
    clips: &[ClipRecord],
    features: &FeatureSource,
) -> HarnessResult<Vec<VerbExample>> {
    let ontology = VerbOntology::desk();
    let mut out = Vec::with_capacity(clips.len());
    for clip in clips {
        let pack = features.pack(clip)?;
        let prep = PreparedClip::from_pack(cfg, clip, &pack)?;
        let label = ontology.label_index(&clip.annotation.verb)?;
        out.push(VerbExample { prep, label });
    }
    Ok(out)
}

/// Groups an ordered clip list into its five-clip videos, validating that
/// every group shares one video id.
pub fn group_videos(clips: &[ClipRecord]) -> HarnessResult<Vec<Vec<&ClipRecord>>> {
    if clips.len() % CLIPS_PER_VIDEO != 0 {
        return Err(HarnessError::Data {
            why: format!("{} clips do not form whole videos", clips.len()),
        });
    }
    let mut videos = Vec::with_capacity(clips.len() / CLIPS_PER_VIDEO);
    for group in clips.chunks(CLIPS_PER_VIDEO) {
        let id = &group[0].video_id;
        if group.iter().any(|c| &c.video_id != id) {
            return Err(HarnessError::Data {
                why: format!("clips around video {id} are out of order"),
            });
        }
        videos.push(group.iter().collect());
    }
    Ok(videos)
}

/// Runs the verb model over every video and caches the embeddings the role
/// stage needs, detaching them from the encoder parameters.
pub fn freeze_videos(
    store: &ParamStore,
    cfg: &ModelConfig,
    clips: &[ClipRecord],
    features: &FeatureSource,
) -> HarnessResult<Vec<FrozenVideo>> {
    let mut out = Vec::new();
    for video in group_videos(clips)? {
        let packs: Vec<GridFeaturePack> = video
            .iter()
            .map(|clip| features.pack(clip))
            .collect::<HarnessResult<_>>()?;
        let pairs: Vec<(&ClipRecord, &GridFeaturePack)> =
            video.into_iter().zip(packs.iter()).collect();
        out.push(freeze_video(store, cfg, &pairs)?);
    }
    Ok(out)
}

/// Serializes one frozen video's gold role sequences, one per clip.
pub fn role_targets(vocab: &RoleVocab, video: &FrozenVideo) -> HarnessResult<Vec<Vec<usize>>> {
    video
        .clips
        .iter()
        .map(|clip| {
            let roles: Vec<(crate::scene::Role, &str)> = clip
                .annotation
                .roles
                .iter()
                .map(|fill| (fill.role, fill.phrase.as_str()))
                .collect();
            Ok(vocab.serialize_target(&clip.annotation.verb, &roles)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use crate::scene::{generate_dataset, DatasetConfig};

    use super::*;

    fn small_clips() -> Vec<ClipRecord> {
        generate_dataset(
            &DatasetConfig {
                clips_per_verb: 5,
                ..DatasetConfig::desk()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn prefix_split_is_verb_balanced() {
        // Verbs round-robin through the clip sequence, so splits sized in
        // whole verb cycles are exactly balanced.
        let clips = generate_dataset(
            &DatasetConfig {
                clips_per_verb: 10,
                ..DatasetConfig::desk()
            },
            3,
        )
        .unwrap();
        assert_eq!(clips.len(), 80);
        let split = split_dataset(clips, 40, 40).unwrap();
        let count = |side: &[ClipRecord], verb: &str| {
            side.iter().filter(|c| c.annotation.verb == verb).count()
        };
        let ontology = VerbOntology::desk();
        for spec in ontology.base_verbs() {
            assert_eq!(count(&split.train, spec.name), 5, "{}", spec.name);
            assert_eq!(count(&split.val, spec.name), 5, "{}", spec.name);
        }
    }

    #[test]
    fn bad_split_sizes_are_rejected() {
        let clips = small_clips();
        assert!(split_dataset(clips.clone(), 30, 5).is_err());
        assert!(split_dataset(clips, 28, 12).is_err());
    }

    #[test]
    fn preparing_a_split_keeps_clip_order_and_labels() {
        let clips = small_clips();
        let cfg = ModelConfig::desk();
        let examples = prepare_clips(&cfg, &clips[..10], &FeatureSource::Rendered).unwrap();
        assert_eq!(examples.len(), 10);
        let ontology = VerbOntology::desk();
        for (clip, ex) in clips.iter().zip(&examples) {
            assert_eq!(ex.prep.clip_id, clip.clip_id);
            assert_eq!(
                ex.label,
                ontology.label_index(&clip.annotation.verb).unwrap()
            );
        }
    }

    #[test]
    fn grouping_recovers_whole_videos() {
        let clips = small_clips();
        let videos = group_videos(&clips).unwrap();
        assert_eq!(videos.len(), 8);
        for video in &videos {
            assert_eq!(video.len(), 5);
            let indices: Vec<u8> = video.iter().map(|c| c.clip_index).collect();
            assert_eq!(indices, vec![1, 2, 3, 4, 5]);
        }
    }

    #[test]
    fn shuffled_clips_fail_video_grouping() {
        let mut clips = small_clips();
        clips.swap(0, 7);
        assert!(group_videos(&clips).is_err());
    }

    #[test]
    fn role_targets_serialize_every_generated_annotation() {
        let clips = small_clips();
        let cfg = ModelConfig::desk();
        let mut store = ParamStore::new(1);
        crate::encoder::register_model_params(&mut store, &cfg, 32, 8, 24).unwrap();
        let videos =
            freeze_videos(&store, &cfg, &clips[..5], &FeatureSource::Rendered).unwrap();
        let vocab = RoleVocab::from_ontology(&VerbOntology::desk());
        let targets = role_targets(&vocab, &videos[0]).unwrap();
        assert_eq!(targets.len(), 5);
        for target in &targets {
            assert!(target.len() >= 3);
            assert_eq!(target[0], crate::decoder::BOS);
            assert_eq!(*target.last().unwrap(), crate::decoder::EOS);
        }
    }
}
