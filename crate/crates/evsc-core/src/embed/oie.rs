//! Object interaction embeddings: per-frame union boxes over the visible
//! objects, pooled and coordinate-embedded like a single object, then
//! aggregated per pathway.

use crate::scene::{ClipRecord, GridFeaturePack};
use crate::tensor::{ParamStore, Tape, TensorId};

use super::ose::pathway_grid;
use super::{
    coord_embed, pool_in_box, project_bbox_to_grid, union_box, Aggregator, BBox, EmbedError,
    EmbedResult, Pathway,
};

/// Union-box interaction embedding for one clip on both pathways, with the
/// per-frame union boxes that produced it.
#[derive(Debug, Clone)]
pub struct InteractionEmbedding {
    /// `[1, d1 + d_c]`.
    pub i_slow: TensorId,
    /// `[1, d2 + d_c]`.
    pub i_fast: TensorId,
    /// Pathway-local frame index and grid-space union box, slow pathway.
    pub unions_slow: Vec<(usize, BBox)>,
    /// Same for the fast pathway.
    pub unions_fast: Vec<(usize, BBox)>,
}

/// Indices of the `o_max` highest-confidence objects, in confidence order.
pub fn top_objects(clip: &ClipRecord, o_max: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..clip.objects.len()).collect();
    order.sort_by(|&a, &b| {
        clip.objects[b]
            .detector_confidence
            .total_cmp(&clip.objects[a].detector_confidence)
    });
    order.truncate(o_max);
    order
}

/// Builds one pathway's per-frame union-box state rows. Frames where no
/// object is visible are skipped; an all-empty pathway is an error.
fn union_state_rows(
    tape: &mut Tape,
    w_c: TensorId,
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    objects: &[usize],
    pathway: Pathway,
) -> EmbedResult<(Vec<(usize, BBox)>, TensorId)> {
    let grid = pathway_grid(pack, pathway);
    let gw = clip.grid_w as usize;
    let gh = clip.grid_h as usize;
    let mut unions = Vec::new();
    let mut rows = Vec::new();
    for k in 0..pathway.frames(clip) {
        let t = pathway.to_fast_frame(clip, k);
        let mut grid_boxes = Vec::new();
        for &ix in objects {
            let raw = match clip.objects[ix].box_at(t, clip.raw_w as f64, clip.raw_h as f64) {
                Some(b) => b,
                None => continue,
            };
            grid_boxes.push(project_bbox_to_grid(
                &BBox::from_raw_box(&raw),
                clip.raw_w as f64,
                clip.raw_h as f64,
                gw,
                gh,
            )?);
        }
        if grid_boxes.is_empty() {
            continue;
        }
        let u = union_box(&grid_boxes)?;
        let pooled = pool_in_box(grid, k, &u)?;
        let p = tape.constant(vec![1, pooled.len()], pooled)?;
        let c = coord_embed(tape, w_c, &u, gw, gh)?;
        let s = tape.concat(1, &[p, c])?;
        unions.push((k, u));
        rows.push(s);
    }
    if rows.is_empty() {
        return Err(EmbedError::NoVisibleObjects);
    }
    let states = tape.concat(0, &rows)?;
    Ok((unions, states))
}

/// Builds the interaction embedding over the given object indices on both
/// pathways, aggregating with the interaction aggregators.
#[allow(clippy::too_many_arguments)]
pub fn build_oie(
    tape: &mut Tape,
    store: &ParamStore,
    w_c: TensorId,
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    objects: &[usize],
    slow_agg: &Aggregator,
    fast_agg: &Aggregator,
) -> EmbedResult<InteractionEmbedding> {
    let (unions_slow, slow_states) =
        union_state_rows(tape, w_c, clip, pack, objects, Pathway::Slow)?;
    let (unions_fast, fast_states) =
        union_state_rows(tape, w_c, clip, pack, objects, Pathway::Fast)?;
    let i_slow = slow_agg.apply(tape, store, slow_states)?;
    let i_fast = fast_agg.apply(tape, store, fast_states)?;
    Ok(InteractionEmbedding {
        i_slow,
        i_fast,
        unions_slow,
        unions_fast,
    })
}
