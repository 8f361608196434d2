//! Object state, motion, and interaction embeddings: box projection,
//! in-box pooling, coordinate embedding, and the state aggregators.

mod agg;
mod bbox;
mod oie;
mod ose;

pub use agg::{register_lstm_params, AggMode, Aggregator};
pub use bbox::{pool_in_box, project_bbox_to_grid, union_box, video_mean_feature, BBox, BoxSpace};
pub use oie::{build_oie, top_objects, InteractionEmbedding};
pub use ose::{build_ome, build_ose, coord_embed, MotionEmbedding, ObjectStateSeq};

use thiserror::Error;

use crate::scene::ClipRecord;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("box ({x0}, {y0}, {x1}, {y1}) lies outside the {w}x{h} frame")]
    OutOfFrame {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        w: f64,
        h: f64,
    },
    #[error("expected a {expected:?}-space box")]
    WrongSpace { expected: BoxSpace },
    #[error("union of zero boxes")]
    EmptyUnion,
    #[error("pooling an empty box")]
    EmptyPool,
    #[error("box exceeds the {gw}x{gh} grid")]
    OutsideGrid { gw: usize, gh: usize },
    #[error("state aggregation over an empty sequence")]
    EmptySeq,
    #[error("no object visible in any frame")]
    NoVisibleObjects,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type EmbedResult<T> = Result<T, EmbedError>;

/// Which backbone stream an embedding is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pathway {
    Slow,
    Fast,
}

impl Pathway {
    pub fn name(self) -> &'static str {
        match self {
            Pathway::Slow => "slow",
            Pathway::Fast => "fast",
        }
    }

    /// Channel dim of this pathway.
    pub fn channels(self, clip: &ClipRecord) -> usize {
        match self {
            Pathway::Slow => clip.d1 as usize,
            Pathway::Fast => clip.d2 as usize,
        }
    }

    /// Number of frames in this pathway.
    pub fn frames(self, clip: &ClipRecord) -> usize {
        match self {
            Pathway::Slow => clip.f1 as usize,
            Pathway::Fast => clip.f2 as usize,
        }
    }

    /// Fast-frame index backing pathway frame `k`.
    pub fn to_fast_frame(self, clip: &ClipRecord, k: usize) -> usize {
        match self {
            Pathway::Slow => clip.slow_to_fast(k),
            Pathway::Fast => k,
        }
    }
}
