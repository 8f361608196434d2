//! Precomputed clip inputs: everything about a clip that does not depend on
//! learned parameters — pooled in-box features, grid-normalized box corners,
//! and the video mean — extracted once so repeated forward passes over the
//! same clip only run learned operations on the tape.

use crate::embed::{
    pool_in_box, project_bbox_to_grid, top_objects, union_box, BBox, EmbedError, Pathway,
};
use crate::scene::{ClipRecord, EventAnnotation, GridFeaturePack, GridTensor};
use crate::tensor::{ParamStore, Tape, TensorId};

use super::model::{
    assemble_tokens, encode_event, video_mean_feature_pack, ClipEmbedding, ModelConfig,
};
use super::{EncoderError, EncoderResult};

/// One track's per-frame inputs on one pathway: pooled features and
/// grid-normalized corner coordinates, one row per visible frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRows {
    /// Pathway-local frame indices with a visible box.
    pub frames: Vec<usize>,
    /// Grid-space box per visible frame, aligned with `frames`.
    pub boxes: Vec<BBox>,
    /// `[T, width]` pooled features, row-major.
    pub pooled: Vec<f64>,
    pub width: usize,
    /// `[T, 4]` corners normalized by the grid size, row-major.
    pub corners: Vec<f64>,
}

impl PreparedRows {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One kept object's rows on both pathways.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedObject {
    pub object_id: u32,
    pub slow: PreparedRows,
    pub fast: PreparedRows,
}

/// A clip reduced to model inputs: the video mean, per-object rows, and
/// union-box rows over the selected objects. Building one runs all pooling
/// and projection arithmetic exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedClip {
    pub clip_id: String,
    pub video_id: String,
    pub clip_index: u8,
    pub annotation: EventAnnotation,
    /// Mean feature over frames and cells, slow channels then fast.
    pub gbar: Vec<f64>,
    /// Kept objects in detector-confidence order.
    pub objects: Vec<PreparedObject>,
    /// Union-box rows over the selected objects, per pathway.
    pub union_slow: PreparedRows,
    pub union_fast: PreparedRows,
    /// Objects dropped because they overlap no frame of some pathway.
    pub skipped: Vec<u32>,
}

/// Pools one object's boxes along one pathway into rows; `None` when the
/// tracklet overlaps none of the pathway's frames.
fn object_rows(
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    obj_ix: usize,
    pathway: Pathway,
) -> EncoderResult<Option<PreparedRows>> {
    let script = &clip.objects[obj_ix];
    let grid = match pathway {
        Pathway::Slow => &pack.slow,
        Pathway::Fast => &pack.fast,
    };
    let gw = clip.grid_w as usize;
    let gh = clip.grid_h as usize;
    let mut rows = PreparedRows {
        frames: Vec::new(),
        boxes: Vec::new(),
        pooled: Vec::new(),
        width: pathway.channels(clip),
        corners: Vec::new(),
    };
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
        push_row(&mut rows, grid, k, &gbox, gw, gh)?;
    }
    if rows.is_empty() {
        return Ok(None);
    }
    Ok(Some(rows))
}

/// Pools the per-frame union box over the given objects along one pathway.
/// Frames where no object is visible are skipped; an all-empty pathway is
/// an error.
fn union_rows(
    clip: &ClipRecord,
    pack: &GridFeaturePack,
    objects: &[usize],
    pathway: Pathway,
) -> EncoderResult<PreparedRows> {
    let grid = match pathway {
        Pathway::Slow => &pack.slow,
        Pathway::Fast => &pack.fast,
    };
    let gw = clip.grid_w as usize;
    let gh = clip.grid_h as usize;
    let mut rows = PreparedRows {
        frames: Vec::new(),
        boxes: Vec::new(),
        pooled: Vec::new(),
        width: pathway.channels(clip),
        corners: Vec::new(),
    };
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
        push_row(&mut rows, grid, k, &u, gw, gh)?;
    }
    if rows.is_empty() {
        return Err(EmbedError::NoVisibleObjects.into());
    }
    Ok(rows)
}

fn push_row(
    rows: &mut PreparedRows,
    grid: &GridTensor,
    k: usize,
    gbox: &BBox,
    gw: usize,
    gh: usize,
) -> EncoderResult<()> {
    let pooled = pool_in_box(grid, k, gbox)?;
    debug_assert_eq!(pooled.len(), rows.width);
    rows.pooled.extend_from_slice(&pooled);
    rows.corners.extend_from_slice(&[
        gbox.x0 / gw as f64,
        gbox.y0 / gh as f64,
        gbox.x1 / gw as f64,
        gbox.y1 / gh as f64,
    ]);
    rows.frames.push(k);
    rows.boxes.push(*gbox);
    Ok(())
}

impl PreparedClip {
    /// Extracts every parameter-free input from one clip. Objects are the
    /// `o_max` highest-confidence tracks; ones missing a pathway are
    /// recorded as skipped, and a clip with no complete track is an error.
    pub fn from_pack(
        cfg: &ModelConfig,
        clip: &ClipRecord,
        pack: &GridFeaturePack,
    ) -> EncoderResult<PreparedClip> {
        cfg.validate()?;
        let selected = top_objects(clip, cfg.o_max);
        let mut objects = Vec::new();
        let mut skipped = Vec::new();
        for &ix in &selected {
            let slow = object_rows(clip, pack, ix, Pathway::Slow)?;
            let fast = object_rows(clip, pack, ix, Pathway::Fast)?;
            match (slow, fast) {
                (Some(slow), Some(fast)) => objects.push(PreparedObject {
                    object_id: clip.objects[ix].object_id,
                    slow,
                    fast,
                }),
                _ => skipped.push(clip.objects[ix].object_id),
            }
        }
        if objects.is_empty() {
            return Err(EncoderError::NoUsableObjects {
                clip_id: clip.clip_id.clone(),
            });
        }
        let union_slow = union_rows(clip, pack, &selected, Pathway::Slow)?;
        let union_fast = union_rows(clip, pack, &selected, Pathway::Fast)?;
        Ok(PreparedClip {
            clip_id: clip.clip_id.clone(),
            video_id: clip.video_id.clone(),
            clip_index: clip.clip_index,
            annotation: clip.annotation.clone(),
            gbar: video_mean_feature_pack(pack),
            objects,
            union_slow,
            union_fast,
            skipped,
        })
    }
}

/// Builds one track's `[T, width + d_c]` state matrix on the tape: pooled
/// rows and corner rows enter as constants, and the coordinate embedding is
/// a single matmul against the transposed projection.
fn state_matrix(
    tape: &mut Tape,
    w_c_t: TensorId,
    rows: &PreparedRows,
) -> EncoderResult<TensorId> {
    let t = rows.len();
    let pooled = tape.constant(vec![t, rows.width], rows.pooled.clone())?;
    let corners = tape.constant(vec![t, 4], rows.corners.clone())?;
    let coords = tape.matmul(corners, w_c_t)?;
    Ok(tape.concat(1, &[pooled, coords])?)
}

/// Forward pass from prepared inputs to the event embedding. Produces the
/// same values as running the per-frame embedding pipeline on the clip.
pub fn encode_prepared(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    prep: &PreparedClip,
) -> EncoderResult<ClipEmbedding> {
    cfg.validate()?;
    let gbar = tape.constant(vec![1, prep.gbar.len()], prep.gbar.clone())?;
    let w_c_t = if cfg.variant.use_disp {
        let w_c = tape.param(store, "ose.w_c")?;
        tape.transpose(w_c)?
    } else {
        tape.constant(vec![4, cfg.d_c], vec![0.0; 4 * cfg.d_c])?
    };
    let (state_slow, state_fast) = cfg.state_aggs();
    let mut full_motions = Vec::new();
    for obj in &prep.objects {
        let s_slow = state_matrix(tape, w_c_t, &obj.slow)?;
        let s_fast = state_matrix(tape, w_c_t, &obj.fast)?;
        let m_slow = state_slow.apply(tape, store, s_slow)?;
        let m_fast = state_fast.apply(tape, store, s_fast)?;
        let full = tape.concat(1, &[m_slow, m_fast])?;
        full_motions.push((obj.object_id, full));
    }
    let full_interaction = if cfg.variant.use_oie {
        let (inter_slow, inter_fast) = cfg.inter_aggs();
        let s_slow = state_matrix(tape, w_c_t, &prep.union_slow)?;
        let s_fast = state_matrix(tape, w_c_t, &prep.union_fast)?;
        let i_slow = inter_slow.apply(tape, store, s_slow)?;
        let i_fast = inter_fast.apply(tape, store, s_fast)?;
        Some(tape.concat(1, &[i_slow, i_fast])?)
    } else {
        None
    };
    let tokens = assemble_tokens(tape, store, gbar, &full_motions, full_interaction)?;
    let (e, attention) = encode_event(tape, store, &tokens, cfg.heads)?;
    Ok(ClipEmbedding {
        e,
        attention,
        tokens,
        full_motions,
        full_interaction,
        skipped: prep.skipped.clone(),
    })
}

#[cfg(test)]
mod tests {
    use crate::embed::{build_oie, build_ome, AggMode, Aggregator};
    use crate::scene::{render_grid_features, ObjectScript, TextureMode};

    use super::super::model::{
        register_model_params, ModelVariant, INTER_AGG_FAST, INTER_AGG_SLOW, STATE_AGG_FAST,
        STATE_AGG_SLOW,
    };
    use super::*;

    fn moving_object(object_id: u32, path: Vec<(f64, f64)>, conf: f64) -> ObjectScript {
        let t_end = path.len() as u32 - 1;
        ObjectScript {
            object_id,
            noun_phrase: "red block".into(),
            t_start: 0,
            t_end,
            centers: path,
            width: 14.0,
            height: 12.0,
            texture: TextureMode::Oscillate {
                omega: 0.4,
                amplitude: 0.3,
            },
            signature: vec![0.8, 0.1, 0.0, 0.3, 0.0, 0.0],
            detector_confidence: conf,
        }
    }

    fn test_clip() -> ClipRecord {
        ClipRecord {
            clip_id: "p0000c1".into(),
            video_id: "p0000".into(),
            clip_index: 1,
            f1: 4,
            f2: 16,
            raw_w: 64,
            raw_h: 64,
            grid_w: 8,
            grid_h: 8,
            d1: 6,
            d2: 2,
            sigma_bg: 0.05,
            feature_seed: 11,
            objects: vec![
                moving_object(0, (0..16).map(|t| (14.0 + 2.0 * t as f64, 30.0)).collect(), 0.97),
                moving_object(1, vec![(46.0, 44.0); 16], 0.88),
            ],
            decor: vec![],
            annotation: EventAnnotation {
                verb: "idle".into(),
                gt_verbs: vec!["idle".into()],
                roles: vec![],
            },
            slow_file: String::new(),
            fast_file: String::new(),
        }
    }

    fn cfg_with(agg: AggMode, variant: ModelVariant) -> ModelConfig {
        ModelConfig {
            d_c: 3,
            d_m: 8,
            heads: 2,
            o_max: 8,
            agg,
            variant,
        }
    }

    /// The per-frame pipeline the prepared path replaces, kept here as the
    /// reference it must match bit for bit.
    fn direct_embedding(
        tape: &mut Tape,
        store: &ParamStore,
        cfg: &ModelConfig,
        clip: &ClipRecord,
        pack: &GridFeaturePack,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let gbar_values = video_mean_feature_pack(pack);
        let gbar = tape.constant(vec![1, gbar_values.len()], gbar_values).unwrap();
        let w_c = if cfg.variant.use_disp {
            tape.param(store, "ose.w_c").unwrap()
        } else {
            tape.constant(vec![cfg.d_c, 4], vec![0.0; cfg.d_c * 4]).unwrap()
        };
        let selected = top_objects(clip, cfg.o_max);
        let slow_agg = Aggregator::new(cfg.agg, STATE_AGG_SLOW);
        let fast_agg = Aggregator::new(cfg.agg, STATE_AGG_FAST);
        let mut motions = Vec::new();
        for &ix in &selected {
            let m = build_ome(tape, store, w_c, clip, pack, ix, &slow_agg, &fast_agg)
                .unwrap()
                .unwrap();
            let full = tape.concat(1, &[m.m_slow, m.m_fast]).unwrap();
            motions.push((m.object_id, full));
        }
        let interaction = if cfg.variant.use_oie {
            let inter_slow = Aggregator::new(cfg.agg, INTER_AGG_SLOW);
            let inter_fast = Aggregator::new(cfg.agg, INTER_AGG_FAST);
            let oie = build_oie(
                tape, store, w_c, clip, pack, &selected, &inter_slow, &inter_fast,
            )
            .unwrap();
            Some(tape.concat(1, &[oie.i_slow, oie.i_fast]).unwrap())
        } else {
            None
        };
        let tokens = assemble_tokens(tape, store, gbar, &motions, interaction).unwrap();
        let (e, attn) = encode_event(tape, store, &tokens, cfg.heads).unwrap();
        (
            tape.data(e).to_vec(),
            tape.data(attn).to_vec(),
            tape.data(tokens.stacked).to_vec(),
        )
    }

    #[test]
    fn prepared_path_matches_the_per_frame_path_bitwise() {
        let clip = test_clip();
        let pack = render_grid_features(&clip).unwrap();
        for agg in [AggMode::Mean, AggMode::Lstm] {
            for name in [
                "ose-pixel+ome",
                "ose-pixel/disp+ome",
                "ose-pixel/disp+ome+oie",
            ] {
                let cfg = cfg_with(agg, ModelVariant::from_name(name).unwrap());
                let mut store = ParamStore::new(5);
                register_model_params(&mut store, &cfg, 6, 2, 8).unwrap();
                let mut direct_tape = Tape::new();
                let (e_direct, attn_direct, tokens_direct) =
                    direct_embedding(&mut direct_tape, &store, &cfg, &clip, &pack);
                let prep = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap();
                let mut tape = Tape::new();
                let emb = encode_prepared(&mut tape, &store, &cfg, &prep).unwrap();
                assert_eq!(tape.data(emb.e), &e_direct[..], "{name}/{agg:?}: e");
                assert_eq!(
                    tape.data(emb.attention),
                    &attn_direct[..],
                    "{name}/{agg:?}: attention"
                );
                assert_eq!(
                    tape.data(emb.tokens.stacked),
                    &tokens_direct[..],
                    "{name}/{agg:?}: tokens"
                );
            }
        }
    }

    #[test]
    fn preparing_skips_objects_missing_a_pathway() {
        let mut clip = test_clip();
        // Second object only alive on fast frames 1-2, which no slow frame
        // at stride 4 touches.
        clip.objects[1] = ObjectScript {
            t_start: 1,
            t_end: 2,
            centers: vec![(46.0, 44.0); 2],
            ..clip.objects[1].clone()
        };
        let pack = render_grid_features(&clip).unwrap();
        let cfg = cfg_with(AggMode::Mean, ModelVariant::from_name("ose-pixel/disp+ome+oie").unwrap());
        let prep = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap();
        assert_eq!(prep.objects.len(), 1);
        assert_eq!(prep.objects[0].object_id, 0);
        assert_eq!(prep.skipped, vec![1]);
        // The union still covers the partial object on the frames it has.
        assert_eq!(prep.union_fast.len(), 16);
    }

    #[test]
    fn preparing_a_clip_with_no_complete_track_is_an_error() {
        let mut clip = test_clip();
        for obj in &mut clip.objects {
            obj.t_start = 1;
            obj.t_end = 2;
            obj.centers = vec![(30.0, 30.0); 2];
        }
        let pack = render_grid_features(&clip).unwrap();
        let cfg = cfg_with(AggMode::Mean, ModelVariant::from_name("ose-pixel/disp+ome").unwrap());
        let err = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap_err();
        assert!(matches!(err, EncoderError::NoUsableObjects { .. }));
    }

    #[test]
    fn prepared_rows_are_identical_for_both_backing_stores() {
        // Preparing twice from the same pack is deterministic.
        let clip = test_clip();
        let pack = render_grid_features(&clip).unwrap();
        let cfg = cfg_with(AggMode::Mean, ModelVariant::from_name("ose-pixel/disp+ome+oie").unwrap());
        let a = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap();
        let b = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn disabled_coordinates_zero_the_coordinate_columns() {
        let clip = test_clip();
        let pack = render_grid_features(&clip).unwrap();
        let cfg = cfg_with(AggMode::Mean, ModelVariant::from_name("ose-pixel+ome").unwrap());
        let prep = PreparedClip::from_pack(&cfg, &clip, &pack).unwrap();
        let mut tape = Tape::new();
        let zeros = tape.constant(vec![4, cfg.d_c], vec![0.0; 4 * cfg.d_c]).unwrap();
        let s = state_matrix(&mut tape, zeros, &prep.objects[0].slow).unwrap();
        let data = tape.data(s);
        let width = prep.objects[0].slow.width + cfg.d_c;
        for (i, v) in data.iter().enumerate() {
            if i % width >= prep.objects[0].slow.width {
                assert_eq!(*v, 0.0);
            }
        }
    }
}
