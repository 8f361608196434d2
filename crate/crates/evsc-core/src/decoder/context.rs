//! Frozen per-clip embeddings and the cross-clip contextualizer: the verb
//! model's outputs are cached as plain values at freeze time, so role
//! training can never touch an encoder parameter.

use crate::encoder::{build_clip_embedding, transformer_layer, ModelConfig};
use crate::scene::{ClipRecord, EventAnnotation, GridFeaturePack};
use crate::tensor::{ParamStore, Tape, TensorId};

use super::{DecoderError, DecoderResult};

/// Number of clips per video throughout the pipeline.
pub const CLIPS_PER_VIDEO: usize = 5;

/// One clip's cached embeddings, detached from any tape.
#[derive(Debug, Clone)]
pub struct FrozenClip {
    pub clip_id: String,
    pub clip_index: u8,
    pub annotation: EventAnnotation,
    /// Event embedding values, length `d1 + d2`.
    pub e: Vec<f64>,
    /// Concatenated two-pathway motion embedding per kept object.
    pub motions: Vec<Vec<f64>>,
    /// Concatenated interaction embedding, when the variant has one.
    pub interaction: Option<Vec<f64>>,
}

/// A video's five frozen clips.
#[derive(Debug, Clone)]
pub struct FrozenVideo {
    pub video_id: String,
    pub clips: Vec<FrozenClip>,
    /// Set by `freeze_video`; the loss refuses to run when it is false.
    pub frozen: bool,
}

/// Runs the verb model over one video's clips and caches every embedding
/// the role stage needs as plain values.
pub fn freeze_video(
    store: &ParamStore,
    cfg: &ModelConfig,
    clips: &[(&ClipRecord, &GridFeaturePack)],
) -> DecoderResult<FrozenVideo> {
    if clips.len() != CLIPS_PER_VIDEO {
        return Err(DecoderError::NotFiveClips { got: clips.len() });
    }
    let video_id = clips[0].0.video_id.clone();
    let mut frozen = Vec::with_capacity(CLIPS_PER_VIDEO);
    for (clip, pack) in clips {
        let mut tape = Tape::new();
        let emb = build_clip_embedding(&mut tape, store, cfg, clip, pack)?;
        frozen.push(FrozenClip {
            clip_id: clip.clip_id.clone(),
            clip_index: clip.clip_index,
            annotation: clip.annotation.clone(),
            e: tape.data(emb.e).to_vec(),
            motions: emb
                .full_motions
                .iter()
                .map(|(_, m)| tape.data(*m).to_vec())
                .collect(),
            interaction: emb.full_interaction.map(|i| tape.data(i).to_vec()),
        });
    }
    Ok(FrozenVideo {
        video_id,
        clips: frozen,
        frozen: true,
    })
}

/// Width of the fused clip vector `e' = [e, mean(motions ∪ {i})]`.
pub fn fused_width(clip: &FrozenClip) -> usize {
    clip.e.len() + clip.motions[0].len()
}

/// Fuses one clip: the event embedding concatenated with the mean of its
/// motion embeddings and (when present) the interaction embedding.
pub fn fuse_clip(clip: &FrozenClip) -> Vec<f64> {
    let width = clip.motions[0].len();
    let mut mean = vec![0.0; width];
    let mut count = 0.0;
    for component in clip
        .motions
        .iter()
        .chain(clip.interaction.iter())
    {
        for (m, v) in mean.iter_mut().zip(component) {
            *m += v;
        }
        count += 1.0;
    }
    for m in &mut mean {
        *m /= count;
    }
    let mut out = clip.e.clone();
    out.extend(mean);
    out
}

/// Registers the contextualizer parameters: fused-vector projection,
/// learned clip-position embeddings, and one encoder layer.
pub fn register_context_params(
    store: &mut ParamStore,
    fused_dim: usize,
    d_m: usize,
) -> DecoderResult<()> {
    store.init_xavier("ctx.proj.w", fused_dim, d_m)?;
    store.init_zeros("ctx.proj.b", vec![d_m])?;
    store.init_uniform_vec("ctx.pos", CLIPS_PER_VIDEO * d_m, 0.1)?;
    crate::encoder::register_layer_params(store, "ctx.layer", d_m)?;
    Ok(())
}

/// Projects the five fused clip vectors, adds learned position embeddings,
/// and runs one encoder layer. Returns the `[5, d_m]` contextual sequence.
pub fn contextualize_clips(
    tape: &mut Tape,
    store: &ParamStore,
    video: &FrozenVideo,
    d_m: usize,
    heads: usize,
) -> DecoderResult<TensorId> {
    if video.clips.len() != CLIPS_PER_VIDEO {
        return Err(DecoderError::NotFiveClips {
            got: video.clips.len(),
        });
    }
    let fused: Vec<Vec<f64>> = video.clips.iter().map(fuse_clip).collect();
    let width = fused[0].len();
    let flat: Vec<f64> = fused.into_iter().flatten().collect();
    let stacked = tape.constant(vec![CLIPS_PER_VIDEO, width], flat)?;
    let w = tape.param(store, "ctx.proj.w")?;
    let b = tape.param(store, "ctx.proj.b")?;
    let projected = tape.matmul(stacked, w)?;
    let projected = tape.add(projected, b)?;
    let pos_flat = tape.param(store, "ctx.pos")?;
    let pos = tape.reshape(pos_flat, vec![CLIPS_PER_VIDEO, d_m])?;
    let with_pos = tape.add(projected, pos)?;
    let (out, _) = transformer_layer(tape, store, "ctx.layer", with_pos, heads)?;
    Ok(out)
}
