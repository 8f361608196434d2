//! Per-object state sequences: pooled appearance plus an embedded box
//! position for every frame a tracklet is visible, and their aggregation
//! into per-pathway motion embeddings.

use crate::scene::{ClipRecord, GridFeaturePack, GridTensor};
use crate::tensor::{ParamStore, Tape, TensorId};

use super::{
    pool_in_box, project_bbox_to_grid, Aggregator, BBox, BoxSpace, EmbedError, EmbedResult,
    Pathway,
};

/// One object's per-frame states on one pathway: pooled features
/// concatenated with the coordinate embedding, one row per visible frame.
#[derive(Debug, Clone)]
pub struct ObjectStateSeq {
    pub object_id: u32,
    pub pathway: Pathway,
    /// Pathway-local frame indices the object is visible on.
    pub frames: Vec<usize>,
    /// Grid-space box per visible frame, aligned with `frames`.
    pub boxes: Vec<BBox>,
    /// `[T, d + d_c]` state rows on the tape.
    pub states: TensorId,
}

/// Both pathways' aggregated motion embeddings for one object.
#[derive(Debug, Clone)]
pub struct MotionEmbedding {
    pub object_id: u32,
    /// `[1, d1 + d_c]`.
    pub m_slow: TensorId,
    /// `[1, d2 + d_c]`.
    pub m_fast: TensorId,
}

/// Embeds a grid-space box as `W_c` applied to its grid-normalized corner
/// coordinates. `w_c` has shape `[d_c, 4]`; the result is `[1, d_c]`.
pub fn coord_embed(
    tape: &mut Tape,
    w_c: TensorId,
    b: &BBox,
    grid_w: usize,
    grid_h: usize,
) -> EmbedResult<TensorId> {
    if b.space != BoxSpace::Grid {
        return Err(EmbedError::WrongSpace {
            expected: BoxSpace::Grid,
        });
    }
    let gw = grid_w as f64;
    let gh = grid_h as f64;
    let bhat = tape.constant(vec![4, 1], vec![b.x0 / gw, b.y0 / gh, b.x1 / gw, b.y1 / gh])?;
    let col = tape.matmul(w_c, bhat)?;
    Ok(tape.transpose(col)?)
}

/// Builds one object's state sequence on one pathway, or `None` when the
/// tracklet overlaps none of the pathway's frames (the caller should skip
/// the object and note the skip).
pub fn build_ose(
    tape: &mut Tape,
    w_c: TensorId,
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    obj_ix: usize,
    pathway: Pathway,
) -> EmbedResult<Option<ObjectStateSeq>> {
    let script = &clip.objects[obj_ix];
    let grid = match pathway {
        Pathway::Slow => &pack.slow,
        Pathway::Fast => &pack.fast,
    };
    let gw = clip.grid_w as usize;
    let gh = clip.grid_h as usize;
    let mut frames = Vec::new();
    let mut boxes = Vec::new();
    let mut rows = Vec::new();
    for k in 0..pathway.frames(clip) {
        let t = pathway.to_fast_frame(clip, k);
        let raw = match script.box_at(t, clip.raw_w as f64, clip.raw_h as f64) {
            Some(b) => b,
            None => continue,
        };
        let gbox = project_bbox_to_grid(
            &BBox::from_raw_box(&raw),
            clip.raw_w as f64,
            clip.raw_h as f64,
            gw,
            gh,
        )?;
        let pooled = pool_in_box(grid, k, &gbox)?;
        let p = tape.constant(vec![1, pooled.len()], pooled)?;
        let c = coord_embed(tape, w_c, &gbox, gw, gh)?;
        let s = tape.concat(1, &[p, c])?;
        frames.push(k);
        boxes.push(gbox);
        rows.push(s);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    let states = tape.concat(0, &rows)?;
    Ok(Some(ObjectStateSeq {
        object_id: script.object_id,
        pathway,
        frames,
        boxes,
        states,
    }))
}

/// Aggregates one object's state sequences on both pathways into a motion
/// embedding. Returns `None` when either pathway has no visible frame.
pub fn build_ome(
    tape: &mut Tape,
    store: &ParamStore,
    w_c: TensorId,
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    obj_ix: usize,
    slow_agg: &Aggregator,
    fast_agg: &Aggregator,
) -> EmbedResult<Option<MotionEmbedding>> {
    let slow = match build_ose(tape, w_c, clip, pack, obj_ix, Pathway::Slow)? {
        Some(seq) => seq,
        None => return Ok(None),
    };
    let fast = match build_ose(tape, w_c, clip, pack, obj_ix, Pathway::Fast)? {
        Some(seq) => seq,
        None => return Ok(None),
    };
    let m_slow = slow_agg.apply(tape, store, slow.states)?;
    let m_fast = fast_agg.apply(tape, store, fast.states)?;
    Ok(Some(MotionEmbedding {
        object_id: clip.objects[obj_ix].object_id,
        m_slow,
        m_fast,
    }))
}

/// Grid tensor accessor shared by a few call sites that only have the pack.
pub(crate) fn pathway_grid(pack: &GridFeaturePack, pathway: Pathway) -> &GridTensor {
    match pathway {
        Pathway::Slow => &pack.slow,
        Pathway::Fast => &pack.fast,
    }
}

#[cfg(test)]
mod tests {
    use crate::scene::{
        render_grid_features, DecorBlob, EventAnnotation, ObjectScript, TextureMode,
    };
    use crate::tensor::Tensor;

    use super::super::AggMode;
    use super::*;

    fn test_clip(objects: Vec<ObjectScript>, decor: Vec<DecorBlob>) -> ClipRecord {
        ClipRecord {
            clip_id: "t0000c1".into(),
            video_id: "t0000".into(),
            clip_index: 1,
            f1: 4,
            f2: 16,
            raw_w: 64,
            raw_h: 64,
            grid_w: 8,
            grid_h: 8,
            d1: 6,
            d2: 3,
            sigma_bg: 0.0,
            feature_seed: 0,
            objects,
            decor,
            annotation: EventAnnotation {
                verb: "idle".into(),
                gt_verbs: vec!["idle".into()],
                roles: vec![],
            },
            slow_file: String::new(),
            fast_file: String::new(),
        }
    }

    fn static_script(cx: f64, cy: f64) -> ObjectScript {
        ObjectScript {
            object_id: 0,
            noun_phrase: "red mug".into(),
            t_start: 0,
            t_end: 15,
            centers: vec![(cx, cy); 16],
            width: 16.0,
            height: 16.0,
            texture: TextureMode::Static,
            signature: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            detector_confidence: 0.95,
        }
    }

    fn w_c_identity(tape: &mut Tape) -> TensorId {
        // 4x4 identity as the coordinate projection: the embedding is then
        // the normalized corner vector itself.
        let mut data = vec![0.0; 16];
        for i in 0..4 {
            data[i * 4 + i] = 1.0;
        }
        tape.leaf(Tensor::new(vec![4, 4], data).unwrap())
    }

    #[test]
    fn identity_projection_recovers_normalized_corners() {
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let b = BBox::grid(2, 4, 6, 8);
        let c = coord_embed(&mut tape, w_c, &b, 8, 8).unwrap();
        assert_eq!(tape.shape(c), &[1, 4]);
        assert_eq!(tape.data(c), &[0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn zero_projection_gives_zero_embedding() {
        let mut tape = Tape::new();
        let w_c = tape.leaf(Tensor::zeros(vec![5, 4]));
        let b = BBox::grid(0, 0, 8, 8);
        let c = coord_embed(&mut tape, w_c, &b, 8, 8).unwrap();
        assert_eq!(tape.data(c), &[0.0; 5]);
    }

    #[test]
    fn raw_boxes_cannot_be_coordinate_embedded() {
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let b = BBox::raw(0.0, 0.0, 8.0, 8.0);
        assert!(matches!(
            coord_embed(&mut tape, w_c, &b, 8, 8),
            Err(EmbedError::WrongSpace { .. })
        ));
    }

    #[test]
    fn static_object_yields_identical_state_rows() {
        let clip = test_clip(vec![static_script(24.0, 24.0)], vec![]);
        let pack = render_grid_features(&clip).unwrap();
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let seq = build_ose(&mut tape, w_c, &clip, &pack, 0, Pathway::Fast)
            .unwrap()
            .unwrap();
        assert_eq!(seq.frames, (0..16).collect::<Vec<_>>());
        let data = tape.data(seq.states);
        let width = 3 + 4;
        assert_eq!(tape.shape(seq.states), &[16, width]);
        for row in 1..16 {
            assert_eq!(data[..width], data[row * width..(row + 1) * width]);
        }
        // The box covers exactly the painted cells, so the pooled channel
        // values equal the signature on the fast channel prefix.
        assert_eq!(&data[..3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn slow_pathway_subsamples_frames() {
        let clip = test_clip(vec![static_script(24.0, 24.0)], vec![]);
        let pack = render_grid_features(&clip).unwrap();
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let seq = build_ose(&mut tape, w_c, &clip, &pack, 0, Pathway::Slow)
            .unwrap()
            .unwrap();
        assert_eq!(seq.frames, vec![0, 1, 2, 3]);
        assert_eq!(tape.shape(seq.states), &[4, 6 + 4]);
    }

    #[test]
    fn moving_object_keeps_pooled_features_but_changes_coords() {
        let mut script = static_script(16.0, 24.0);
        script.centers = (0..16).map(|t| (16.0 + t as f64 * 2.0, 24.0)).collect();
        let clip = test_clip(vec![script], vec![]);
        let pack = render_grid_features(&clip).unwrap();
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let seq = build_ose(&mut tape, w_c, &clip, &pack, 0, Pathway::Fast)
            .unwrap()
            .unwrap();
        let data = tape.data(seq.states).to_vec();
        let width = 7;
        for row in 0..16 {
            // Pooling covers exactly the painted cells every frame, so the
            // appearance half is constant while the object moves.
            assert_eq!(&data[row * width..row * width + 3], &[1.0, 0.0, 0.0]);
        }
        let first_coords = &data[3..7];
        let last_coords = &data[15 * width + 3..16 * width];
        assert_ne!(first_coords, last_coords);
    }

    #[test]
    fn tracklet_between_slow_frames_is_skipped() {
        let mut script = static_script(24.0, 24.0);
        script.t_start = 1;
        script.t_end = 2;
        script.centers = vec![(24.0, 24.0); 2];
        let clip = test_clip(vec![script], vec![]);
        let pack = render_grid_features(&clip).unwrap();
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        // Slow frames are fast frames 0, 4, 8, 12; a tracklet on frames 1-2
        // never appears there.
        let slow = build_ose(&mut tape, w_c, &clip, &pack, 0, Pathway::Slow).unwrap();
        assert!(slow.is_none());
        let fast = build_ose(&mut tape, w_c, &clip, &pack, 0, Pathway::Fast)
            .unwrap()
            .unwrap();
        assert_eq!(fast.frames, vec![1, 2]);
    }

    #[test]
    fn motion_embedding_dims_follow_the_pathways() {
        let clip = test_clip(
            vec![static_script(24.0, 24.0), static_script(48.0, 48.0)],
            vec![],
        );
        let pack = render_grid_features(&clip).unwrap();
        let store = ParamStore::new(0);
        let slow_agg = Aggregator::new(AggMode::Mean, "state_agg.slow");
        let fast_agg = Aggregator::new(AggMode::Mean, "state_agg.fast");
        let mut tape = Tape::new();
        let w_c = w_c_identity(&mut tape);
        let m = build_ome(
            &mut tape, &store, w_c, &clip, &pack, 0, &slow_agg, &fast_agg,
        )
        .unwrap()
        .unwrap();
        // d_c = 4 with the identity projection, so slow is 6 + 4 and fast
        // is 3 + 4 wide.
        assert_eq!(tape.shape(m.m_slow), &[1, 10]);
        assert_eq!(tape.shape(m.m_fast), &[1, 7]);
    }
}
