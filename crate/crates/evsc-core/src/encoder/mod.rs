//! Argument interaction encoder: token assembly over the video, object, and
//! interaction embeddings, a single transformer layer, the event embedding
//! readout, and the verb classification head.

mod layer;
mod model;
mod prepared;

pub use layer::{register_layer_params, transformer_layer};
pub use model::{
    assemble_tokens, build_clip_embedding, classify_verb, encode_event, register_model_params,
    topk_verbs, verb_loss, video_mean_feature_pack, ClipEmbedding, ModelConfig, ModelVariant,
    TokenKind, TokenSequence, VerbPrediction, LN_EPS,
};
pub use prepared::{encode_prepared, PreparedClip, PreparedObject, PreparedRows};

use thiserror::Error;

use crate::embed::EmbedError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("bad encoder configuration: {what}")]
    BadConfig { what: String },
    #[error("no tracked object overlaps both pathways in clip {clip_id}")]
    NoUsableObjects { clip_id: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type EncoderResult<T> = Result<T, EncoderError>;
