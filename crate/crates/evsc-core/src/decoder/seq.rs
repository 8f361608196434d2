//! Causal sequence decoder over role-token targets: teacher-forced
//! training loss across a video's five clips and greedy decoding.

use crate::tensor::{ParamStore, Tape, TensorId};

use super::context::{contextualize_clips, register_context_params, CLIPS_PER_VIDEO};
use super::vocab::{RoleVocab, BOS, EOS, PAD};
use super::{DecoderError, DecoderResult, FrozenVideo};

/// Score added to masked attention logits; large enough that the masked
/// weights underflow to exactly zero after softmax.
const MASK_SCORE: f64 = -1e30;

/// Decoder-stage hyper-parameters.
#[derive(Debug, Clone)]
pub struct RoleConfig {
    pub d_m: usize,
    pub heads: usize,
    /// Hard cap on generated tokens per clip.
    pub max_len: usize,
}

impl RoleConfig {
    pub fn desk() -> Self {
        RoleConfig {
            d_m: 64,
            heads: 4,
            max_len: 24,
        }
    }
}

/// Registers every role-stage parameter: the clip contextualizer plus the
/// decoder embedding table, attention blocks, and output projection. The
/// output projection starts at zero so an untrained decoder predicts the
/// uniform distribution.
pub fn register_role_params(
    store: &mut ParamStore,
    cfg: &RoleConfig,
    fused_dim: usize,
    vocab_size: usize,
) -> DecoderResult<()> {
    if cfg.d_m == 0 || cfg.heads == 0 || cfg.d_m % cfg.heads != 0 {
        return Err(DecoderError::BadTarget {
            what: format!("head count {} must divide width {}", cfg.heads, cfg.d_m),
        });
    }
    register_context_params(store, fused_dim, cfg.d_m)?;
    store.init_xavier("dec.embed", vocab_size, cfg.d_m)?;
    store.init_uniform_vec("dec.pos", cfg.max_len * cfg.d_m, 0.1)?;
    for block in ["self", "cross"] {
        for name in ["wq", "wk", "wv", "wo"] {
            store.init_xavier(&format!("dec.{block}.{name}"), cfg.d_m, cfg.d_m)?;
        }
        for name in ["bq", "bk", "bv", "bo"] {
            store.init_zeros(&format!("dec.{block}.{name}"), vec![cfg.d_m])?;
        }
    }
    store.init_xavier("dec.ffn.w1", cfg.d_m, 4 * cfg.d_m)?;
    store.init_zeros("dec.ffn.b1", vec![4 * cfg.d_m])?;
    store.init_xavier("dec.ffn.w2", 4 * cfg.d_m, cfg.d_m)?;
    store.init_zeros("dec.ffn.b2", vec![cfg.d_m])?;
    for ln in ["ln1", "ln2", "ln3"] {
        store.init_ones(&format!("dec.{ln}.gain"), cfg.d_m)?;
        store.init_zeros(&format!("dec.{ln}.bias"), vec![cfg.d_m])?;
    }
    store.init_zeros("dec.out.w", vec![cfg.d_m, vocab_size])?;
    store.init_zeros("dec.out.b", vec![vocab_size])?;
    Ok(())
}

/// Multi-head attention block with optional causal masking; `kv` may be
/// the sequence itself (self-attention) or a memory (cross-attention).
fn attention_block(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    queries: TensorId,
    kv: TensorId,
    heads: usize,
    causal: bool,
) -> DecoderResult<TensorId> {
    let dim = tape.shape(queries)[1];
    let rows = tape.shape(queries)[0];
    let cols = tape.shape(kv)[0];
    let head_dim = dim / heads;
    let wq = tape.param(store, &format!("{prefix}.wq"))?;
    let wk = tape.param(store, &format!("{prefix}.wk"))?;
    let wv = tape.param(store, &format!("{prefix}.wv"))?;
    let wo = tape.param(store, &format!("{prefix}.wo"))?;
    let bq = tape.param(store, &format!("{prefix}.bq"))?;
    let bk = tape.param(store, &format!("{prefix}.bk"))?;
    let bv = tape.param(store, &format!("{prefix}.bv"))?;
    let bo = tape.param(store, &format!("{prefix}.bo"))?;
    let q = tape.matmul(queries, wq)?;
    let q = tape.add(q, bq)?;
    let k = tape.matmul(kv, wk)?;
    let k = tape.add(k, bk)?;
    let v = tape.matmul(kv, wv)?;
    let v = tape.add(v, bv)?;
    let mask = if causal {
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in (r + 1)..cols {
                data[r * cols + c] = MASK_SCORE;
            }
        }
        Some(tape.constant(vec![rows, cols], data)?)
    } else {
        None
    };
    let scale = 1.0 / (head_dim as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice(q, 1, h * head_dim, head_dim)?;
        let kh = tape.slice(k, 1, h * head_dim, head_dim)?;
        let vh = tape.slice(v, 1, h * head_dim, head_dim)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let mut scores = tape.scale(scores, scale)?;
        if let Some(m) = mask {
            scores = tape.add(scores, m)?;
        }
        let attn = tape.softmax(scores)?;
        outs.push(tape.matmul(attn, vh)?);
    }
    let merged = tape.concat(1, &outs)?;
    let projected = tape.matmul(merged, wo)?;
    Ok(tape.add(projected, bo)?)
}

fn layer_norm_block(
    tape: &mut Tape,
    store: &ParamStore,
    name: &str,
    x: TensorId,
) -> DecoderResult<TensorId> {
    let gain = tape.param(store, &format!("{name}.gain"))?;
    let bias = tape.param(store, &format!("{name}.bias"))?;
    Ok(tape.layer_norm(x, gain, bias, crate::encoder::LN_EPS)?)
}

/// Runs the decoder over one clip's input token prefix against its memory
/// row. Returns `[T, vocab]` logits, one row per input position.
pub fn decoder_forward(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &RoleConfig,
    input_ids: &[usize],
    memory: TensorId,
) -> DecoderResult<TensorId> {
    if input_ids.is_empty() || input_ids.len() > cfg.max_len {
        return Err(DecoderError::BadTarget {
            what: format!(
                "input length {} outside 1..={}",
                input_ids.len(),
                cfg.max_len
            ),
        });
    }
    let table = tape.param(store, "dec.embed")?;
    let x = tape.embed(table, input_ids)?;
    let pos_flat = tape.param(store, "dec.pos")?;
    let pos = tape.reshape(pos_flat, vec![cfg.max_len, cfg.d_m])?;
    let pos = tape.slice(pos, 0, 0, input_ids.len())?;
    let x = tape.add(x, pos)?;

    let attended = attention_block(tape, store, "dec.self", x, x, cfg.heads, true)?;
    let res1 = tape.add(x, attended)?;
    let x1 = layer_norm_block(tape, store, "dec.ln1", res1)?;

    let crossed = attention_block(tape, store, "dec.cross", x1, memory, cfg.heads, false)?;
    let res2 = tape.add(x1, crossed)?;
    let x2 = layer_norm_block(tape, store, "dec.ln2", res2)?;

    let w1 = tape.param(store, "dec.ffn.w1")?;
    let b1 = tape.param(store, "dec.ffn.b1")?;
    let w2 = tape.param(store, "dec.ffn.w2")?;
    let b2 = tape.param(store, "dec.ffn.b2")?;
    let hidden = tape.matmul(x2, w1)?;
    let hidden = tape.add(hidden, b1)?;
    let hidden = tape.relu(hidden)?;
    let ffn = tape.matmul(hidden, w2)?;
    let ffn = tape.add(ffn, b2)?;
    let res3 = tape.add(x2, ffn)?;
    let x3 = layer_norm_block(tape, store, "dec.ln3", res3)?;

    let w_out = tape.param(store, "dec.out.w")?;
    let b_out = tape.param(store, "dec.out.b")?;
    let logits = tape.matmul(x3, w_out)?;
    Ok(tape.add(logits, b_out)?)
}

/// Mean token-level cross-entropy over the five clips' target sequences,
/// teacher-forced, with PAD positions masked out of the mean.
pub fn teacher_forced_loss(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &RoleConfig,
    video: &FrozenVideo,
    targets: &[Vec<usize>],
) -> DecoderResult<TensorId> {
    if !video.frozen {
        return Err(DecoderError::EncoderNotFrozen);
    }
    if targets.len() != CLIPS_PER_VIDEO || video.clips.len() != CLIPS_PER_VIDEO {
        return Err(DecoderError::NotFiveClips {
            got: targets.len().min(video.clips.len()),
        });
    }
    let longest = targets.iter().map(|t| t.len()).max().unwrap();
    if longest > cfg.max_len {
        return Err(DecoderError::BadTarget {
            what: format!("target length {longest} exceeds max_len {}", cfg.max_len),
        });
    }
    if targets.iter().any(|t| t.len() < 2) {
        return Err(DecoderError::BadTarget {
            what: "targets must hold at least BOS and one successor".into(),
        });
    }
    let ctx = contextualize_clips(tape, store, video, cfg.d_m, cfg.heads)?;
    let steps = longest - 1;
    let mut all_logits = Vec::with_capacity(CLIPS_PER_VIDEO);
    let mut gold = Vec::with_capacity(CLIPS_PER_VIDEO * steps);
    let mut mask = Vec::with_capacity(CLIPS_PER_VIDEO * steps);
    for (i, target) in targets.iter().enumerate() {
        let mut inputs: Vec<usize> = target[..target.len() - 1].to_vec();
        inputs.resize(steps, PAD);
        for step in 0..steps {
            if step + 1 < target.len() {
                gold.push(target[step + 1]);
                mask.push(1.0);
            } else {
                gold.push(PAD);
                mask.push(0.0);
            }
        }
        let memory = tape.slice(ctx, 0, i, 1)?;
        all_logits.push(decoder_forward(tape, store, cfg, &inputs, memory)?);
    }
    let logits = tape.concat(0, &all_logits)?;
    Ok(tape.cross_entropy(logits, &gold, &mask)?)
}

/// One clip's greedy decode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedClip {
    pub clip_id: String,
    pub clip_index: u8,
    /// Verb the decode was conditioned on.
    pub verb: String,
    /// Full token sequence including the leading BOS and verb.
    pub tokens: Vec<usize>,
    /// True when the clip hit `max_len` before emitting EOS.
    pub truncated: bool,
}

/// Greedy decode of every clip, conditioned on the given per-clip verbs
/// (gold verbs under the evaluation protocol). Deterministic: argmax per
/// step, first index on ties, until EOS or `max_len`.
pub fn greedy_decode_with_verbs(
    store: &ParamStore,
    cfg: &RoleConfig,
    video: &FrozenVideo,
    vocab: &RoleVocab,
    verbs: &[String],
) -> DecoderResult<Vec<DecodedClip>> {
    if !video.frozen {
        return Err(DecoderError::EncoderNotFrozen);
    }
    if verbs.len() != CLIPS_PER_VIDEO || video.clips.len() != CLIPS_PER_VIDEO {
        return Err(DecoderError::NotFiveClips {
            got: verbs.len().min(video.clips.len()),
        });
    }
    let mut out = Vec::with_capacity(CLIPS_PER_VIDEO);
    for (i, (clip, verb)) in video.clips.iter().zip(verbs).enumerate() {
        let verb_id = vocab.id(verb).ok_or_else(|| DecoderError::OovToken {
            token: verb.clone(),
        })?;
        let mut ids = vec![BOS, verb_id];
        let mut truncated = false;
        loop {
            if ids.last() == Some(&EOS) {
                break;
            }
            if ids.len() >= cfg.max_len {
                truncated = true;
                break;
            }
            let mut tape = Tape::new();
            let ctx = contextualize_clips(&mut tape, store, video, cfg.d_m, cfg.heads)?;
            let memory = tape.slice(ctx, 0, i, 1)?;
            let logits = decoder_forward(&mut tape, store, cfg, &ids, memory)?;
            let row_len = vocab.len();
            let data = tape.data(logits);
            let last = &data[(ids.len() - 1) * row_len..ids.len() * row_len];
            let mut best = 0;
            for (j, v) in last.iter().enumerate() {
                if *v > last[best] {
                    best = j;
                }
            }
            ids.push(best);
        }
        out.push(DecodedClip {
            clip_id: clip.clip_id.clone(),
            clip_index: clip.clip_index,
            verb: verb.clone(),
            tokens: ids,
            truncated,
        });
    }
    Ok(out)
}

/// Greedy decode conditioned on each clip's gold verb.
pub fn greedy_decode(
    store: &ParamStore,
    cfg: &RoleConfig,
    video: &FrozenVideo,
    vocab: &RoleVocab,
) -> DecoderResult<Vec<DecodedClip>> {
    let verbs: Vec<String> = video
        .clips
        .iter()
        .map(|c| c.annotation.verb.clone())
        .collect();
    greedy_decode_with_verbs(store, cfg, video, vocab, &verbs)
}
