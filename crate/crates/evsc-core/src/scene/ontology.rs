//! The verb ontology: eight event classes with synonym names, role sets,
//! and generator predicates decidable from object scripts alone.
//!
//! The ontology is built so the three evidence channels are individually
//! load-bearing: fall/rise differ only in displacement, talk/idle differ
//! only in texture, and talk/chew differ only in what sits between the two
//! objects — their per-object trajectories and textures are identical.

use super::geom::Box2D;
use super::{DecorBlob, ObjectScript, Role, SceneError, SceneResult, TextureMode};

/// Closed 40-token vocabulary for role phrases.
pub const COLORS: [&str; 6] = ["red", "blue", "green", "yellow", "purple", "orange"];
pub const SIZES: [&str; 4] = ["small", "big", "tiny", "huge"];
pub const NOUNS: [&str; 10] = [
    "block", "ball", "box", "disk", "cone", "ring", "slab", "peg", "tile", "knob",
];
pub const LOC_NOUNS: [&str; 6] = ["wall", "ledge", "floor", "corner", "shelf", "rail"];
pub const SCENES: [&str; 6] = ["kitchen", "yard", "office", "lab", "hall", "attic"];
pub const FUNCTION_WORDS: [&str; 8] = ["the", "a", "near", "on", "by", "in", "at", "over"];

/// All 40 phrase tokens in a fixed order.
pub const SCENE_VOCAB: [&str; 40] = [
    "red", "blue", "green", "yellow", "purple", "orange", "small", "big", "tiny", "huge", "block",
    "ball", "box", "disk", "cone", "ring", "slab", "peg", "tile", "knob", "wall", "ledge", "floor",
    "corner", "shelf", "rail", "kitchen", "yard", "office", "lab", "hall", "attic", "the", "a",
    "near", "on", "by", "in", "at", "over",
];

/// Kinematic family of a verb; drives both the clip sampler and the
/// ground-truth predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbKind {
    ApproachHit,
    Recede,
    Fall,
    Rise,
    Talk,
    Chew,
    Carry,
    Idle,
}

impl VerbKind {
    pub const ALL: [VerbKind; 8] = [
        VerbKind::ApproachHit,
        VerbKind::Recede,
        VerbKind::Fall,
        VerbKind::Rise,
        VerbKind::Talk,
        VerbKind::Chew,
        VerbKind::Carry,
        VerbKind::Idle,
    ];

    /// Which trajectory program the sampler uses.
    fn trajectory_tag(self) -> &'static str {
        match self {
            VerbKind::ApproachHit => "band-c-dwell-then-approach",
            VerbKind::Recede => "band-c-dwell-then-recede",
            VerbKind::Fall => "column-dwell-then-down",
            VerbKind::Rise => "column-dwell-then-up",
            VerbKind::Talk | VerbKind::Chew | VerbKind::Idle => "band-a-static",
            VerbKind::Carry => "band-b-parallel",
        }
    }

    /// Which texture program the sampler uses.
    fn texture_tag(self) -> &'static str {
        match self {
            VerbKind::Talk | VerbKind::Chew => "agent-oscillates",
            _ => "all-static",
        }
    }

    /// Where the untracked scenery blob goes.
    fn interaction_tag(self) -> &'static str {
        match self {
            VerbKind::Chew => "blob-in-union-gap",
            _ => "blob-in-far-corner",
        }
    }
}

/// One verb: canonical name, accepted synonym names, admissible role set,
/// and kinematic family.
#[derive(Debug, Clone)]
pub struct VerbSpec {
    pub name: &'static str,
    pub synonyms: [&'static str; 2],
    pub roles: Vec<Role>,
    pub kind: VerbKind,
}

impl VerbSpec {
    /// Canonical name plus synonyms, canonical first.
    pub fn accepted_names(&self) -> Vec<String> {
        let mut v = vec![self.name.to_string()];
        v.extend(self.synonyms.iter().map(|s| s.to_string()));
        v
    }
}

/// The full verb inventory, including synonym names as distinct labels.
pub struct VerbOntology {
    verbs: Vec<VerbSpec>,
}

impl Default for VerbOntology {
    fn default() -> Self {
        Self::desk()
    }
}

impl VerbOntology {
    /// The desk-scale ontology: 8 base verbs, each with 2 synonyms, for a
    /// 24-name label space.
    pub fn desk() -> Self {
        use Role::*;
        let verbs = vec![
            VerbSpec {
                name: "approach-hit",
                synonyms: ["strike", "bump"],
                roles: vec![Arg0, Arg1, ALoc, AScn],
                kind: VerbKind::ApproachHit,
            },
            VerbSpec {
                name: "recede",
                synonyms: ["retreat", "withdraw"],
                roles: vec![Arg0, Arg1, ALoc],
                kind: VerbKind::Recede,
            },
            VerbSpec {
                name: "fall",
                synonyms: ["drop", "descend"],
                roles: vec![Arg0, ALoc, AScn],
                kind: VerbKind::Fall,
            },
            VerbSpec {
                name: "rise",
                synonyms: ["ascend", "lift"],
                roles: vec![Arg0, ALoc, AScn],
                kind: VerbKind::Rise,
            },
            VerbSpec {
                name: "talk-static-oscillate",
                synonyms: ["speak", "chat"],
                roles: vec![Arg0, Arg2, AScn],
                kind: VerbKind::Talk,
            },
            VerbSpec {
                name: "chew-interaction-oscillate",
                synonyms: ["munch", "gnaw"],
                roles: vec![Arg0, Arg1, AScn],
                kind: VerbKind::Chew,
            },
            VerbSpec {
                name: "carry-parallel-motion",
                synonyms: ["haul", "transport"],
                roles: vec![Arg0, Arg1, ALoc, AScn],
                kind: VerbKind::Carry,
            },
            VerbSpec {
                name: "idle",
                synonyms: ["rest", "wait"],
                roles: vec![Arg0, ALoc, AScn],
                kind: VerbKind::Idle,
            },
        ];
        VerbOntology { verbs }
    }

    pub fn base_verbs(&self) -> &[VerbSpec] {
        &self.verbs
    }

    /// All label names: for each base verb its canonical name then its two
    /// synonyms, in ontology order.
    pub fn all_names(&self) -> Vec<&'static str> {
        let mut names = Vec::with_capacity(self.verbs.len() * 3);
        for v in &self.verbs {
            names.push(v.name);
            names.push(v.synonyms[0]);
            names.push(v.synonyms[1]);
        }
        names
    }

    pub fn num_labels(&self) -> usize {
        self.verbs.len() * 3
    }

    /// Index of a name (canonical or synonym) in the label space.
    pub fn label_index(&self, name: &str) -> SceneResult<usize> {
        self.all_names()
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| SceneError::UnknownVerb(name.to_string()))
    }

    /// Spec of the base verb that owns `name` (canonical or synonym).
    pub fn resolve(&self, name: &str) -> SceneResult<&VerbSpec> {
        self.verbs
            .iter()
            .find(|v| v.name == name || v.synonyms.contains(&name))
            .ok_or_else(|| SceneError::UnknownVerb(name.to_string()))
    }

    /// Verbs whose pairing is discriminable only through object displacement.
    pub fn displacement_subset(&self) -> [&'static str; 2] {
        ["fall", "rise"]
    }

    /// Verbs whose pairing is discriminable only through texture change.
    pub fn texture_subset(&self) -> [&'static str; 2] {
        ["talk-static-oscillate", "idle"]
    }

    /// Verbs whose pairing is discriminable only through the two-object
    /// interaction region.
    pub fn interaction_subset(&self) -> [&'static str; 2] {
        ["talk-static-oscillate", "chew-interaction-oscillate"]
    }

    /// Structural check that the three evidence channels are individually
    /// isolated by some verb pair: the pair's samplers must agree on the
    /// other two channels and differ in exactly the channel under test.
    pub fn verify_channel_separation(&self) -> SceneResult<()> {
        let pairs = [
            (self.displacement_subset(), "trajectory"),
            (self.texture_subset(), "texture"),
            (self.interaction_subset(), "interaction"),
        ];
        for ([a, b], channel) in pairs {
            let ka = self.resolve(a)?.kind;
            let kb = self.resolve(b)?.kind;
            let diffs = [
                (ka.trajectory_tag() != kb.trajectory_tag(), "trajectory"),
                (ka.texture_tag() != kb.texture_tag(), "texture"),
                (ka.interaction_tag() != kb.interaction_tag(), "interaction"),
            ];
            for (differs, tag) in diffs {
                let should_differ = tag == channel;
                if differs != should_differ {
                    return Err(SceneError::BadConfig {
                        what: format!(
                            "verb pair ({a}, {b}) must differ exactly in the {channel} channel, \
                             but the {tag} programs {}",
                            if differs { "differ" } else { "agree" }
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

// ── predicates ──────────────────────────────────────────────────────

const EPS: f64 = 1e-9;

struct Frames<'a> {
    agent: &'a ObjectScript,
    other: &'a ObjectScript,
    raw_w: f64,
    raw_h: f64,
    frames: usize,
    /// Geometry scale relative to the 64-pixel reference frame.
    scale: f64,
}

impl<'a> Frames<'a> {
    fn agent_box(&self, t: usize) -> Option<Box2D> {
        self.agent.box_at(t, self.raw_w, self.raw_h)
    }

    fn other_box(&self, t: usize) -> Option<Box2D> {
        self.other.box_at(t, self.raw_w, self.raw_h)
    }

    /// Center distances over frames where both tracklets exist.
    fn distances(&self) -> Vec<f64> {
        (0..self.frames)
            .filter_map(|t| Some(self.agent_box(t)?.center_distance(&self.other_box(t)?)))
            .collect()
    }

    fn union_at(&self, t: usize) -> Option<Box2D> {
        match (self.agent_box(t), self.other_box(t)) {
            (Some(a), Some(b)) => Some(a.union(&b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        }
    }
}

fn is_static(obj: &ObjectScript) -> bool {
    obj.centers
        .windows(2)
        .all(|w| (w[0].0 - w[1].0).abs() <= EPS && (w[0].1 - w[1].1).abs() <= EPS)
}

fn weakly_increasing(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] >= w[0] - EPS)
}

fn weakly_decreasing(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] <= w[0] + EPS)
}

fn texture_static(obj: &ObjectScript) -> bool {
    matches!(obj.texture, TextureMode::Static)
}

fn texture_oscillates(obj: &ObjectScript) -> bool {
    matches!(obj.texture, TextureMode::Oscillate { .. })
}

/// Crumb strictly inside the union box but overlapping neither object, on
/// every frame where a union exists.
fn blob_in_gap(ctx: &Frames, blob: &DecorBlob) -> bool {
    let b = blob.bbox(ctx.raw_w, ctx.raw_h);
    let mut saw_union = false;
    for t in 0..ctx.frames {
        if let Some(u) = ctx.union_at(t) {
            saw_union = true;
            if !u.contains_box(&b) {
                return false;
            }
        }
        if let Some(a) = ctx.agent_box(t) {
            if a.overlaps(&b) {
                return false;
            }
        }
        if let Some(o) = ctx.other_box(t) {
            if o.overlaps(&b) {
                return false;
            }
        }
    }
    saw_union
}

/// Crumb disjoint from the union box (and hence both objects) on every frame.
fn blob_outside_union(ctx: &Frames, blob: &DecorBlob) -> bool {
    let b = blob.bbox(ctx.raw_w, ctx.raw_h);
    (0..ctx.frames).all(|t| match ctx.union_at(t) {
        Some(u) => !u.overlaps(&b),
        None => true,
    })
}

fn holds(kind: VerbKind, ctx: &Frames, decor: &[DecorBlob]) -> bool {
    let s = ctx.scale;
    let blob_ok_outside = decor.iter().all(|b| blob_outside_union(ctx, b));
    match kind {
        VerbKind::ApproachHit => {
            let d = ctx.distances();
            let overlap_last = match (ctx.agent_box(ctx.frames - 1), ctx.other_box(ctx.frames - 1)) {
                (Some(a), Some(b)) => a.overlaps(&b),
                _ => false,
            };
            is_static(ctx.other)
                && texture_static(ctx.agent)
                && d.len() == ctx.frames
                && weakly_decreasing(&d)
                && d[0] - d[d.len() - 1] >= 8.0 * s
                && overlap_last
                && blob_ok_outside
        }
        VerbKind::Recede => {
            let d = ctx.distances();
            let overlap_first = match (ctx.agent_box(0), ctx.other_box(0)) {
                (Some(a), Some(b)) => a.overlaps(&b),
                _ => false,
            };
            is_static(ctx.other)
                && texture_static(ctx.agent)
                && d.len() == ctx.frames
                && weakly_increasing(&d)
                && d[d.len() - 1] - d[0] >= 8.0 * s
                && overlap_first
                && blob_ok_outside
        }
        VerbKind::Fall | VerbKind::Rise => {
            let xs: Vec<f64> = ctx.agent.centers.iter().map(|c| c.0).collect();
            let ys: Vec<f64> = ctx.agent.centers.iter().map(|c| c.1).collect();
            let x_const = xs.iter().all(|x| (x - xs[0]).abs() <= EPS);
            let dwell_end = ctx.frames / 2 - 1;
            let dwell = ys.get(dwell_end).map(|y| (y - ys[0]).abs() <= EPS) == Some(true);
            let (monotone, span) = if kind == VerbKind::Fall {
                (weakly_increasing(&ys), ys[ys.len() - 1] - ys[0])
            } else {
                (weakly_decreasing(&ys), ys[0] - ys[ys.len() - 1])
            };
            is_static(ctx.other)
                && texture_static(ctx.agent)
                && texture_static(ctx.other)
                && x_const
                && monotone
                && dwell
                && span >= 16.0 * s
                && blob_ok_outside
        }
        VerbKind::Talk | VerbKind::Idle | VerbKind::Chew => {
            let statics = is_static(ctx.agent) && is_static(ctx.other);
            let texture = match kind {
                VerbKind::Idle => texture_static(ctx.agent),
                _ => texture_oscillates(ctx.agent),
            } && texture_static(ctx.other);
            let blob = match kind {
                VerbKind::Chew => decor.len() == 1 && blob_in_gap(ctx, &decor[0]),
                _ => blob_ok_outside,
            };
            statics && texture && blob
        }
        VerbKind::Carry => {
            if ctx.agent.centers.len() != ctx.other.centers.len()
                || ctx.agent.t_start != ctx.other.t_start
            {
                return false;
            }
            let parallel = ctx
                .agent
                .centers
                .windows(2)
                .zip(ctx.other.centers.windows(2))
                .all(|(a, o)| {
                    let da = (a[1].0 - a[0].0, a[1].1 - a[0].1);
                    let dob = (o[1].0 - o[0].0, o[1].1 - o[0].1);
                    (da.0 - dob.0).abs() <= EPS && (da.1 - dob.1).abs() <= EPS
                });
            let net_x = ctx.agent.centers[ctx.agent.centers.len() - 1].0 - ctx.agent.centers[0].0;
            let y_const = ctx
                .agent
                .centers
                .iter()
                .all(|c| (c.1 - ctx.agent.centers[0].1).abs() <= EPS);
            parallel
                && texture_static(ctx.agent)
                && texture_static(ctx.other)
                && net_x.abs() >= 16.0 * s
                && y_const
                && blob_ok_outside
        }
    }
}

/// Applies every base-verb predicate and returns the unique match.
pub fn classify_scripts<'o>(
    ontology: &'o VerbOntology,
    scripts: &[ObjectScript],
    decor: &[DecorBlob],
    raw_w: u32,
    raw_h: u32,
    frames: usize,
) -> SceneResult<&'o VerbSpec> {
    if scripts.len() < 2 {
        return Err(SceneError::AmbiguousScripts { count: 0 });
    }
    let ctx = Frames {
        agent: &scripts[0],
        other: &scripts[1],
        raw_w: raw_w as f64,
        raw_h: raw_h as f64,
        frames,
        scale: raw_w as f64 / 64.0,
    };
    let matches: Vec<&VerbSpec> = ontology
        .base_verbs()
        .iter()
        .filter(|v| holds(v.kind, &ctx, decor))
        .collect();
    match matches.len() {
        1 => Ok(matches[0]),
        n => Err(SceneError::AmbiguousScripts { count: n }),
    }
}
