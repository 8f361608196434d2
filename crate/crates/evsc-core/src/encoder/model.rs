//! Clip-level model assembly: video/object/interaction tokens, the event
//! embedding readout, and the verb classification head.

use crate::embed::{video_mean_feature, AggMode, Aggregator};
use crate::scene::{ClipRecord, GridFeaturePack};
use crate::tensor::{ParamStore, Tape, TensorId, TensorResult};

use super::layer::{register_layer_params, transformer_layer};
use super::{EncoderError, EncoderResult};

/// Epsilon inside every layer norm.
pub const LN_EPS: f64 = 1e-5;

/// Parameter prefixes for the four sequence aggregators.
pub const STATE_AGG_SLOW: &str = "state_agg.slow";
pub const STATE_AGG_FAST: &str = "state_agg.fast";
pub const INTER_AGG_SLOW: &str = "inter_agg.slow";
pub const INTER_AGG_FAST: &str = "inter_agg.fast";

/// What kind of embedding a token row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Video,
    Object,
    Interaction,
}

/// Encoder input: one row per token, video first, objects in confidence
/// order, the interaction token (if any) last.
#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub kinds: Vec<TokenKind>,
    /// Object id per token; `None` for the video and interaction tokens.
    pub object_ids: Vec<Option<u32>>,
    /// `[L, d_m]` stacked token rows on the tape.
    pub stacked: TensorId,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }
}

/// Which embedding channels the model uses. The architecture is the same
/// in every variant; disabled channels are zeroed or omitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelVariant {
    /// Feed box-coordinate embeddings (otherwise they are zero vectors).
    pub use_disp: bool,
    /// Append the union-box interaction token.
    pub use_oie: bool,
}

impl ModelVariant {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "ose-pixel+ome" => Some(ModelVariant {
                use_disp: false,
                use_oie: false,
            }),
            "ose-pixel/disp+ome" => Some(ModelVariant {
                use_disp: true,
                use_oie: false,
            }),
            "ose-pixel/disp+ome+oie" => Some(ModelVariant {
                use_disp: true,
                use_oie: true,
            }),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match (self.use_disp, self.use_oie) {
            (false, _) => "ose-pixel+ome",
            (true, false) => "ose-pixel/disp+ome",
            (true, true) => "ose-pixel/disp+ome+oie",
        }
    }
}

/// Model hyper-parameters that do not depend on the dataset geometry.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    /// Coordinate-embedding width.
    pub d_c: usize,
    /// Token width inside the transformer.
    pub d_m: usize,
    pub heads: usize,
    /// Cap on tracked objects, highest detector confidence first.
    pub o_max: usize,
    pub agg: AggMode,
    pub variant: ModelVariant,
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            d_c: 8,
            d_m: 64,
            heads: 4,
            o_max: 8,
            agg: AggMode::Mean,
            variant: ModelVariant {
                use_disp: true,
                use_oie: true,
            },
        }
    }

    pub fn validate(&self) -> EncoderResult<()> {
        if self.d_m == 0 || self.heads == 0 || self.d_m % self.heads != 0 {
            return Err(EncoderError::BadConfig {
                what: format!("head count {} must divide token width {}", self.heads, self.d_m),
            });
        }
        if self.d_c == 0 || self.o_max == 0 {
            return Err(EncoderError::BadConfig {
                what: "d_c and o_max must be positive".into(),
            });
        }
        Ok(())
    }

    pub(crate) fn state_aggs(&self) -> (Aggregator, Aggregator) {
        (
            Aggregator::new(self.agg, STATE_AGG_SLOW),
            Aggregator::new(self.agg, STATE_AGG_FAST),
        )
    }

    pub(crate) fn inter_aggs(&self) -> (Aggregator, Aggregator) {
        (
            Aggregator::new(self.agg, INTER_AGG_SLOW),
            Aggregator::new(self.agg, INTER_AGG_FAST),
        )
    }
}

/// Registers every verb-stage parameter for a dataset with pathway widths
/// `d1`/`d2` and `n_labels` verb labels.
pub fn register_model_params(
    store: &mut ParamStore,
    cfg: &ModelConfig,
    d1: usize,
    d2: usize,
    n_labels: usize,
) -> EncoderResult<()> {
    cfg.validate()?;
    let joint = d1 + d2;
    if joint % 2 != 0 {
        return Err(EncoderError::BadConfig {
            what: format!("pathway widths {d1}+{d2} must sum to an even bottleneck base"),
        });
    }
    let token_in = joint + 2 * cfg.d_c;
    // Only parameters the variant actually exercises are registered, so the
    // optimizer can insist on a gradient for every parameter it owns.
    if cfg.variant.use_disp {
        store.init_xavier("ose.w_c", cfg.d_c, 4)?;
    }
    store.init_xavier("encoder.proj.video.w", joint, cfg.d_m)?;
    store.init_zeros("encoder.proj.video.b", vec![cfg.d_m])?;
    store.init_xavier("encoder.proj.object.w", token_in, cfg.d_m)?;
    store.init_zeros("encoder.proj.object.b", vec![cfg.d_m])?;
    if cfg.variant.use_oie {
        store.init_xavier("encoder.proj.inter.w", token_in, cfg.d_m)?;
        store.init_zeros("encoder.proj.inter.b", vec![cfg.d_m])?;
    }
    register_layer_params(store, "encoder.layer", cfg.d_m)?;
    store.init_xavier("encoder.out.w", cfg.d_m, joint)?;
    store.init_zeros("encoder.out.b", vec![joint])?;
    let half = joint / 2;
    store.init_xavier("verb_head.w1", joint, half)?;
    store.init_zeros("verb_head.b1", vec![half])?;
    store.init_xavier("verb_head.w2", half, n_labels)?;
    store.init_zeros("verb_head.b2", vec![n_labels])?;
    if cfg.agg == AggMode::Lstm {
        crate::embed::register_lstm_params(store, STATE_AGG_SLOW, d1 + cfg.d_c)?;
        crate::embed::register_lstm_params(store, STATE_AGG_FAST, d2 + cfg.d_c)?;
        if cfg.variant.use_oie {
            crate::embed::register_lstm_params(store, INTER_AGG_SLOW, d1 + cfg.d_c)?;
            crate::embed::register_lstm_params(store, INTER_AGG_FAST, d2 + cfg.d_c)?;
        }
    }
    Ok(())
}

/// Mean feature over all frames and cells of both pathways, slow then fast.
pub fn video_mean_feature_pack(pack: &GridFeaturePack) -> Vec<f64> {
    let mut out = video_mean_feature(&pack.slow);
    out.extend(video_mean_feature(&pack.fast));
    out
}

/// Projects the embeddings into token rows: the video token first, object
/// tokens in the given order, then the interaction token if present.
pub fn assemble_tokens(
    tape: &mut Tape,
    store: &ParamStore,
    gbar: TensorId,
    motions: &[(u32, TensorId)],
    interaction: Option<TensorId>,
) -> EncoderResult<TokenSequence> {
    let wv = tape.param(store, "encoder.proj.video.w")?;
    let bv = tape.param(store, "encoder.proj.video.b")?;
    let projected = tape.matmul(gbar, wv)?;
    let video = tape.add(projected, bv)?;
    let mut rows = vec![video];
    let mut kinds = vec![TokenKind::Video];
    let mut object_ids = vec![None];
    if !motions.is_empty() {
        let wo = tape.param(store, "encoder.proj.object.w")?;
        let bo = tape.param(store, "encoder.proj.object.b")?;
        for &(object_id, m) in motions {
            let p = tape.matmul(m, wo)?;
            rows.push(tape.add(p, bo)?);
            kinds.push(TokenKind::Object);
            object_ids.push(Some(object_id));
        }
    }
    if let Some(i) = interaction {
        let wi = tape.param(store, "encoder.proj.inter.w")?;
        let bi = tape.param(store, "encoder.proj.inter.b")?;
        let p = tape.matmul(i, wi)?;
        rows.push(tape.add(p, bi)?);
        kinds.push(TokenKind::Interaction);
        object_ids.push(None);
    }
    let stacked = tape.concat(0, &rows)?;
    Ok(TokenSequence {
        kinds,
        object_ids,
        stacked,
    })
}

/// Runs the encoder layer and reads out the event embedding at the video
/// token. Returns `e` of shape `[1, d1 + d2]` and the head-averaged
/// attention matrix.
pub fn encode_event(
    tape: &mut Tape,
    store: &ParamStore,
    seq: &TokenSequence,
    heads: usize,
) -> EncoderResult<(TensorId, TensorId)> {
    let (out, attention) = transformer_layer(tape, store, "encoder.layer", seq.stacked, heads)?;
    let video_row = tape.slice(out, 0, 0, 1)?;
    let w = tape.param(store, "encoder.out.w")?;
    let b = tape.param(store, "encoder.out.b")?;
    let projected = tape.matmul(video_row, w)?;
    let e = tape.add(projected, b)?;
    Ok((e, attention))
}

/// Verb-head output: raw logits for the training loss and softmax
/// probabilities for ranking.
#[derive(Debug, Clone, Copy)]
pub struct VerbPrediction {
    pub logits: TensorId,
    pub probs: TensorId,
}

/// Two linear maps with a ReLU bottleneck, then softmax over verb labels.
pub fn classify_verb(
    tape: &mut Tape,
    store: &ParamStore,
    e: TensorId,
) -> EncoderResult<VerbPrediction> {
    let w1 = tape.param(store, "verb_head.w1")?;
    let b1 = tape.param(store, "verb_head.b1")?;
    let w2 = tape.param(store, "verb_head.w2")?;
    let b2 = tape.param(store, "verb_head.b2")?;
    let h = tape.matmul(e, w1)?;
    let h = tape.add(h, b1)?;
    let h = tape.relu(h)?;
    let logits = tape.matmul(h, w2)?;
    let logits = tape.add(logits, b2)?;
    let probs = tape.softmax(logits)?;
    Ok(VerbPrediction { logits, probs })
}

/// Indices of the `k` most probable labels, descending; ties broken by
/// ascending label index.
pub fn topk_verbs(probs: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Everything the verb and role stages need from one clip's forward pass.
#[derive(Debug, Clone)]
pub struct ClipEmbedding {
    /// Event embedding `[1, d1 + d2]`.
    pub e: TensorId,
    /// Head-averaged attention over the token sequence.
    pub attention: TensorId,
    pub tokens: TokenSequence,
    /// Concatenated two-pathway motion embedding per kept object.
    pub full_motions: Vec<(u32, TensorId)>,
    /// Concatenated two-pathway interaction embedding, when enabled.
    pub full_interaction: Option<TensorId>,
    /// Objects dropped because they overlap no frame of some pathway.
    pub skipped: Vec<u32>,
}

/// Full per-clip forward pass up to the event embedding. Extracts the
/// parameter-free inputs and encodes them; callers that revisit a clip
/// should hold the [`PreparedClip`](super::PreparedClip) themselves and
/// call [`encode_prepared`](super::encode_prepared) per pass.
pub fn build_clip_embedding(
    tape: &mut Tape,
    store: &ParamStore,
    cfg: &ModelConfig,
    clip: &ClipRecord,
    pack: &GridFeaturePack,
) -> EncoderResult<ClipEmbedding> {
    let prep = super::prepared::PreparedClip::from_pack(cfg, clip, pack)?;
    super::prepared::encode_prepared(tape, store, cfg, &prep)
}

/// Cross-entropy between one clip's verb logits and its gold label.
pub fn verb_loss(
    tape: &mut Tape,
    prediction: &VerbPrediction,
    gold_label: usize,
) -> TensorResult<TensorId> {
    tape.cross_entropy(prediction.logits, &[gold_label], &[1.0])
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::scene::{
        render_grid_features, EventAnnotation, GridTensor, ObjectScript, TextureMode,
    };

    use super::*;

    fn clip_with_objects(objects: Vec<ObjectScript>) -> ClipRecord {
        ClipRecord {
            clip_id: "m0000c1".into(),
            video_id: "m0000".into(),
            clip_index: 1,
            f1: 4,
            f2: 16,
            raw_w: 64,
            raw_h: 64,
            grid_w: 8,
            grid_h: 8,
            d1: 6,
            d2: 2,
            sigma_bg: 0.0,
            feature_seed: 7,
            objects,
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

    fn static_object(object_id: u32, cx: f64, cy: f64, conf: f64) -> ObjectScript {
        ObjectScript {
            object_id,
            noun_phrase: "mug".into(),
            t_start: 0,
            t_end: 15,
            centers: vec![(cx, cy); 16],
            width: 16.0,
            height: 16.0,
            texture: TextureMode::Static,
            signature: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            detector_confidence: conf,
        }
    }

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            d_c: 2,
            d_m: 8,
            heads: 4,
            o_max: 8,
            agg: AggMode::Mean,
            variant: ModelVariant {
                use_disp: true,
                use_oie: true,
            },
        }
    }

    fn registered_store(seed: u64, cfg: &ModelConfig) -> ParamStore {
        let mut store = ParamStore::new(seed);
        register_model_params(&mut store, cfg, 6, 2, 24).unwrap();
        store
    }

    #[test]
    fn pack_mean_concatenates_pathway_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut slow = GridTensor::zeros(2, 4, 4, 3);
        let mut fast = GridTensor::zeros(8, 4, 4, 2);
        for v in &mut slow.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in &mut fast.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let pack = GridFeaturePack {
            slow: slow.clone(),
            fast: fast.clone(),
        };
        let got = video_mean_feature_pack(&pack);
        assert_eq!(got.len(), 5);
        let mut want = vec![0.0; 5];
        for t in 0..2 {
            for x in 0..4 {
                for y in 0..4 {
                    for ch in 0..3 {
                        want[ch] += slow.cell(t, x, y)[ch];
                    }
                }
            }
        }
        for w in want.iter_mut().take(3) {
            *w /= 32.0;
        }
        for t in 0..8 {
            for x in 0..4 {
                for y in 0..4 {
                    for ch in 0..2 {
                        want[3 + ch] += fast.cell(t, x, y)[ch];
                    }
                }
            }
        }
        for w in want.iter_mut().skip(3) {
            *w /= 128.0;
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn token_sequence_grows_with_sources() {
        let cfg = small_cfg();
        let store = registered_store(1, &cfg);
        let mut tape = Tape::new();
        let gbar = tape.constant(vec![1, 8], vec![0.1; 8]).unwrap();
        let bare = assemble_tokens(&mut tape, &store, gbar, &[], None).unwrap();
        assert_eq!(bare.len(), 1);
        assert_eq!(bare.kinds, vec![TokenKind::Video]);

        let m0 = tape.constant(vec![1, 12], vec![0.2; 12]).unwrap();
        let m1 = tape.constant(vec![1, 12], vec![-0.1; 12]).unwrap();
        let inter = tape.constant(vec![1, 12], vec![0.05; 12]).unwrap();
        let full = assemble_tokens(&mut tape, &store, gbar, &[(4, m0), (9, m1)], Some(inter))
            .unwrap();
        assert_eq!(full.len(), 4);
        assert_eq!(
            full.kinds,
            vec![
                TokenKind::Video,
                TokenKind::Object,
                TokenKind::Object,
                TokenKind::Interaction
            ]
        );
        assert_eq!(full.object_ids, vec![None, Some(4), Some(9), None]);
        assert_eq!(tape.shape(full.stacked), &[4, 8]);
    }

    #[test]
    fn zero_projections_give_zero_tokens() {
        let cfg = small_cfg();
        let mut store = registered_store(1, &cfg);
        for name in [
            "encoder.proj.video.w",
            "encoder.proj.object.w",
            "encoder.proj.inter.w",
        ] {
            store.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let gbar = tape.constant(vec![1, 8], vec![0.7; 8]).unwrap();
        let m = tape.constant(vec![1, 12], vec![0.3; 12]).unwrap();
        let seq = assemble_tokens(&mut tape, &store, gbar, &[(0, m)], None).unwrap();
        assert!(tape.data(seq.stacked).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ablated_layer_reduces_to_projected_double_norm() {
        let cfg = small_cfg();
        let mut store = registered_store(3, &cfg);
        for name in [
            "encoder.layer.attn.wv",
            "encoder.layer.attn.wo",
            "encoder.layer.ffn.w2",
        ] {
            store.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        // Identity output projection so the readout is the normed token.
        {
            let t = store.get_mut("encoder.out.w").unwrap();
            t.data.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..8 {
                t.data[i * 8 + i] = 1.0;
            }
        }
        let gbar_values: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
        let mut tape = Tape::new();
        let gbar = tape.constant(vec![1, 8], gbar_values.clone()).unwrap();
        let seq = assemble_tokens(&mut tape, &store, gbar, &[], None).unwrap();
        let (e, attn) = encode_event(&mut tape, &store, &seq, cfg.heads).unwrap();
        assert_eq!(tape.data(attn), &[1.0]);

        // Hand-trace: project the video token, then two layer norms.
        let wv = &store.get("encoder.proj.video.w").unwrap().data;
        let mut token = vec![0.0; 8];
        for (col, t) in token.iter_mut().enumerate() {
            for row in 0..8 {
                *t += gbar_values[row] * wv[row * 8 + col];
            }
        }
        let ln = |row: &[f64]| {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            row.iter()
                .map(|v| (v - mean) / (var + LN_EPS).sqrt())
                .collect::<Vec<f64>>()
        };
        let want = ln(&ln(&token));
        for (a, b) in tape.data(e).iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn permuting_object_tokens_leaves_event_embedding_unchanged() {
        let cfg = small_cfg();
        let store = registered_store(11, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..20 {
            let gbar_values: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let motions: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let run = |order: &[usize]| {
                let mut tape = Tape::new();
                let gbar = tape.constant(vec![1, 8], gbar_values.clone()).unwrap();
                let ms: Vec<(u32, TensorId)> = order
                    .iter()
                    .map(|&i| {
                        (
                            i as u32,
                            tape.constant(vec![1, 12], motions[i].clone()).unwrap(),
                        )
                    })
                    .collect();
                let seq = assemble_tokens(&mut tape, &store, gbar, &ms, None).unwrap();
                let (e, _) = encode_event(&mut tape, &store, &seq, cfg.heads).unwrap();
                tape.data(e).to_vec()
            };
            let base = run(&[0, 1, 2]);
            let permuted = run(&[2, 0, 1]);
            for (a, b) in base.iter().zip(&permuted) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn truncation_ignores_objects_below_the_cap() {
        let mut cfg = small_cfg();
        cfg.o_max = 2;
        let store = registered_store(13, &cfg);
        let strong = vec![
            static_object(0, 16.0, 24.0, 0.95),
            static_object(1, 48.0, 40.0, 0.89),
        ];
        let mut with_extra = strong.clone();
        with_extra.push(static_object(2, 40.0, 16.0, 0.50));
        // Same rendered features either way: the extra entry is only an
        // additional low-confidence detection in the record.
        let pack = render_grid_features(&clip_with_objects(strong.clone())).unwrap();
        let run = |objects: Vec<ObjectScript>| {
            let clip = clip_with_objects(objects);
            let mut tape = Tape::new();
            let emb = build_clip_embedding(&mut tape, &store, &cfg, &clip, &pack).unwrap();
            tape.data(emb.e).to_vec()
        };
        // Adding an object below the confidence cap must not move a bit.
        assert_eq!(run(strong), run(with_extra));
    }

    #[test]
    fn event_embedding_shape_is_stable_across_variants() {
        for name in [
            "ose-pixel+ome",
            "ose-pixel/disp+ome",
            "ose-pixel/disp+ome+oie",
        ] {
            let mut cfg = small_cfg();
            cfg.variant = ModelVariant::from_name(name).unwrap();
            let store = registered_store(17, &cfg);
            let clip = clip_with_objects(vec![
                static_object(0, 16.0, 24.0, 0.95),
                static_object(1, 48.0, 40.0, 0.89),
            ]);
            let pack = render_grid_features(&clip).unwrap();
            let mut tape = Tape::new();
            let emb = build_clip_embedding(&mut tape, &store, &cfg, &clip, &pack).unwrap();
            assert_eq!(tape.shape(emb.e), &[1, 8], "variant {name}");
            let has_inter = emb.tokens.kinds.contains(&TokenKind::Interaction);
            assert_eq!(has_inter, cfg.variant.use_oie, "variant {name}");
        }
    }

    #[test]
    fn zero_verb_head_predicts_uniformly() {
        let cfg = small_cfg();
        let mut store = registered_store(19, &cfg);
        for name in ["verb_head.w1", "verb_head.w2"] {
            store.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut tape = Tape::new();
        let e = tape.constant(vec![1, 8], vec![0.4; 8]).unwrap();
        let pred = classify_verb(&mut tape, &store, e).unwrap();
        for p in tape.data(pred.probs) {
            assert!((p - 1.0 / 24.0).abs() <= 1e-12);
        }
        let loss = verb_loss(&mut tape, &pred, 5).unwrap();
        assert!((tape.data(loss)[0] - (24.0f64).ln()).abs() <= 1e-9);
    }

    #[test]
    fn verb_head_gradients_match_finite_differences() {
        use crate::tensor::finite_diff_check;
        let cfg = small_cfg();
        let store = registered_store(23, &cfg);
        let e_values: Vec<f64> = (0..8).map(|i| 0.25 * i as f64 - 0.9).collect();
        for name in ["verb_head.w1", "verb_head.b1", "verb_head.w2", "verb_head.b2"] {
            let at = store.get(name).unwrap().clone();
            let err = finite_diff_check(
                &at,
                |tape, probe| {
                    tape.bind_param(name, probe);
                    let e = tape.constant(vec![1, 8], e_values.clone())?;
                    let pred = classify_verb(tape, &store, e).map_err(|err| match err {
                        EncoderError::Tensor(t) => t,
                        other => panic!("unexpected encoder error: {other}"),
                    })?;
                    tape.cross_entropy(pred.logits, &[3], &[1.0])
                },
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-6, "{name}: finite-diff mismatch {err}");
        }
    }

    #[test]
    fn topk_orders_and_breaks_ties_deterministically() {
        let mut one_hot = vec![0.0; 6];
        one_hot[4] = 1.0;
        assert_eq!(topk_verbs(&one_hot, 1), vec![4]);
        let uniform = vec![0.25; 4];
        assert_eq!(topk_verbs(&uniform, 3), vec![0, 1, 2]);
        assert_eq!(topk_verbs(&[0.1, 0.5, 0.4], 2), vec![1, 2]);
    }

    #[test]
    fn bad_head_split_is_rejected() {
        let mut cfg = small_cfg();
        cfg.heads = 3;
        let mut store = ParamStore::new(0);
        assert!(matches!(
            register_model_params(&mut store, &cfg, 6, 2, 24),
            Err(EncoderError::BadConfig { .. })
        ));
    }
}
