//! Semantic-role sequence decoding: a role-token vocabulary, frozen clip
//! embeddings contextualized across a video, and a causal decoder trained
//! teacher-forced on serialized verb/role targets.

mod context;
mod seq;
mod vocab;

pub use context::{
    contextualize_clips, freeze_video, fuse_clip, fused_width, register_context_params,
    FrozenClip, FrozenVideo, CLIPS_PER_VIDEO,
};
pub use seq::{
    decoder_forward, greedy_decode, greedy_decode_with_verbs, register_role_params,
    teacher_forced_loss, DecodedClip, RoleConfig,
};
pub use vocab::{RoleVocab, BOS, EOS, MARKERS, PAD};

use crate::encoder::EncoderError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum DecoderError {
    #[error("a video must supply exactly five clips, got {got}")]
    NotFiveClips { got: usize },
    #[error("token {token:?} is not in the role vocabulary")]
    OovToken { token: String },
    #[error("role training requires frozen clip embeddings")]
    EncoderNotFrozen,
    #[error("bad decoder target: {what}")]
    BadTarget { what: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

pub type DecoderResult<T> = Result<T, DecoderError>;
