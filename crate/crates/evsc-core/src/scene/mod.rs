//! Procedural clip generation: kinematic object scripts, two-pathway grid
//! feature rendering, ground-truth event annotations, and dataset files.

mod generate;
mod geom;
mod io;
mod ontology;
mod render;

pub use generate::{generate_dataset, DatasetConfig};
pub use geom::{grid_span, Box2D};
pub use io::{load_features, read_dataset, read_evgf, write_dataset, write_evgf};
pub use ontology::{
    classify_scripts, VerbKind, VerbOntology, VerbSpec, COLORS, FUNCTION_WORDS, LOC_NOUNS, NOUNS,
    SCENE_VOCAB, SCENES, SIZES,
};
pub use render::{render_grid_features, GridFeaturePack, GridTensor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("verb {verb} is unsatisfiable under the configured dims: {why}")]
    Unsatisfiable { verb: String, why: String },
    #[error("invalid dataset config: {what}")]
    BadConfig { what: String },
    #[error("clip {clip_id} violates {what}")]
    BadClip { clip_id: String, what: String },
    #[error("unknown verb {0}")]
    UnknownVerb(String),
    #[error("scripts match {count} verb predicates, expected exactly 1")]
    AmbiguousScripts { count: usize },
    #[error("bad EVGF magic at byte 0")]
    BadMagic,
    #[error("EVGF file truncated at byte offset {offset}")]
    Truncated { offset: usize },
    #[error("EVGF header mismatch: {what}")]
    BadHeader { what: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type SceneResult<T> = Result<T, SceneError>;

/// The five evaluated semantic roles, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Arg0,
    Arg1,
    Arg2,
    ALoc,
    AScn,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Arg0, Role::Arg1, Role::Arg2, Role::ALoc, Role::AScn];

    pub fn name(self) -> &'static str {
        match self {
            Role::Arg0 => "Arg0",
            Role::Arg1 => "Arg1",
            Role::Arg2 => "Arg2",
            Role::ALoc => "ALoc",
            Role::AScn => "AScn",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-frame texture multiplier applied to an object's feature signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TextureMode {
    /// Constant appearance.
    Static,
    /// `1 + amplitude * sin(omega * t)` over fast frames `t`.
    Oscillate { omega: f64, amplitude: f64 },
    /// Linear appearance drift `1 + rate * t`.
    Morph { rate: f64 },
}

impl TextureMode {
    pub fn signal(&self, t: usize) -> f64 {
        match *self {
            TextureMode::Static => 1.0,
            TextureMode::Oscillate { omega, amplitude } => 1.0 + amplitude * (omega * t as f64).sin(),
            TextureMode::Morph { rate } => 1.0 + rate * t as f64,
        }
    }
}

/// One tracked object: where it is on every fast frame it exists, how big
/// it is, and what its feature signature looks like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScript {
    pub object_id: u32,
    /// Short noun phrase naming the object (doubles as its role phrase).
    pub noun_phrase: String,
    /// First fast frame the tracklet exists on.
    pub t_start: u32,
    /// Last fast frame the tracklet exists on (inclusive).
    pub t_end: u32,
    /// Box centers in raw pixel units, one per frame of `[t_start, t_end]`.
    pub centers: Vec<(f64, f64)>,
    pub width: f64,
    pub height: f64,
    pub texture: TextureMode,
    /// Unit feature vector over `max(d1, d2)` channels.
    pub signature: Vec<f64>,
    pub detector_confidence: f64,
}

impl ObjectScript {
    pub fn alive_at(&self, t: usize) -> bool {
        (self.t_start as usize..=self.t_end as usize).contains(&t)
    }

    /// Box at fast frame `t`, clipped to the `w x h` frame. `None` when the
    /// tracklet does not exist at `t`.
    pub fn box_at(&self, t: usize, w: f64, h: f64) -> Option<Box2D> {
        if !self.alive_at(t) {
            return None;
        }
        let (cx, cy) = self.centers[t - self.t_start as usize];
        Some(Box2D::centered(cx, cy, self.width, self.height).clip(w, h))
    }
}

/// Untracked scenery blob: rendered into the grid features but invisible to
/// the tracker, so it can only be seen by pooling a region that covers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorBlob {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    /// Feature channel carrying the blob's signature.
    pub channel: usize,
}

impl DecorBlob {
    pub fn bbox(&self, w: f64, h: f64) -> Box2D {
        Box2D::centered(self.x, self.y, self.width, self.height).clip(w, h)
    }
}

/// One filled semantic role with its reference phrasings (first entry is
/// the primary phrase used as the training target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleFill {
    pub role: Role,
    pub phrase: String,
    pub references: Vec<String>,
}

/// Ground truth for one clip: the verb plus its filled role set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    /// Canonical verb name from the ontology.
    pub verb: String,
    /// Acceptable verb names (the canonical one first, then synonyms).
    pub gt_verbs: Vec<String>,
    /// Filled roles in canonical role order; a subset of the verb's role set.
    pub roles: Vec<RoleFill>,
}

/// Everything known about one clip: dimensions, object scripts, scenery,
/// ground truth, and where its rendered features live on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub video_id: String,
    /// Position of this clip within its video, 1-based, 1..=5.
    pub clip_index: u8,
    /// Slow-pathway frame count.
    pub f1: u32,
    /// Fast-pathway frame count.
    pub f2: u32,
    pub raw_w: u32,
    pub raw_h: u32,
    pub grid_w: u32,
    pub grid_h: u32,
    /// Slow-pathway channel count.
    pub d1: u32,
    /// Fast-pathway channel count.
    pub d2: u32,
    pub sigma_bg: f64,
    /// Seed for the rendering noise stream; fixed at generation time so
    /// rendering is a pure function of the record.
    pub feature_seed: u64,
    pub objects: Vec<ObjectScript>,
    pub decor: Vec<DecorBlob>,
    pub annotation: EventAnnotation,
    /// Relative paths of the rendered feature files.
    pub slow_file: String,
    pub fast_file: String,
}

impl ClipRecord {
    pub fn stride(&self) -> usize {
        (self.f2 / self.f1) as usize
    }

    /// Fast-frame index backing slow frame `k`.
    pub fn slow_to_fast(&self, k: usize) -> usize {
        k * self.stride()
    }

    /// Structural checks every record must satisfy.
    pub fn validate(&self) -> SceneResult<()> {
        let fail = |what: &str| {
            Err(SceneError::BadClip {
                clip_id: self.clip_id.clone(),
                what: what.to_string(),
            })
        };
        if self.f1 >= self.f2 || self.f2 % self.f1 != 0 {
            return fail("frame counts: need f1 < f2 and f1 | f2");
        }
        if !(1..=5).contains(&self.clip_index) {
            return fail("clip_index out of 1..=5");
        }
        for pair in self.objects.windows(2) {
            if pair[0].detector_confidence <= pair[1].detector_confidence {
                return fail("detector confidences not strictly descending");
            }
        }
        let dmax = self.d1.max(self.d2) as usize;
        for obj in &self.objects {
            if obj.t_end >= self.f2 || obj.t_start > obj.t_end {
                return fail("tracklet window outside clip");
            }
            if obj.centers.len() != (obj.t_end - obj.t_start + 1) as usize {
                return fail("trajectory length != tracklet window");
            }
            if obj.signature.len() != dmax {
                return fail("signature length != max(d1, d2)");
            }
        }
        for (a_ix, a) in self.objects.iter().enumerate() {
            for b in &self.objects[a_ix + 1..] {
                let dot: f64 = a.signature.iter().zip(&b.signature).map(|(x, y)| x * y).sum();
                if dot >= 0.5 {
                    return fail("object signatures too similar (dot >= 0.5)");
                }
            }
        }
        Ok(())
    }
}
