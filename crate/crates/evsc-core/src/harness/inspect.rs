//! Dumping a clip's internals — the encoder attention matrix and the
//! per-frame object state rows — as CSV for inspection.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::encoder::{ClipEmbedding, ModelConfig, PreparedClip, PreparedRows, TokenKind};
use crate::tensor::{ParamStore, Tape};

use super::{HarnessError, HarnessResult};

fn token_labels(emb: &ClipEmbedding) -> Vec<String> {
    emb.tokens
        .kinds
        .iter()
        .zip(&emb.tokens.object_ids)
        .map(|(kind, id)| match kind {
            TokenKind::Video => "video".to_string(),
            TokenKind::Object => format!("obj:{}", id.expect("object tokens carry an id")),
            TokenKind::Interaction => "inter".to_string(),
        })
        .collect()
}

/// Writes the head-averaged attention matrix as CSV: one labeled row per
/// query token, one labeled column per key token.
pub fn write_attention_csv(path: &Path, tape: &Tape, emb: &ClipEmbedding) -> HarnessResult<()> {
    let labels = token_labels(emb);
    let shape = tape.shape(emb.attention);
    if shape != [labels.len(), labels.len()] {
        return Err(HarnessError::Data {
            why: format!(
                "attention shape {shape:?} does not match {} tokens",
                labels.len()
            ),
        });
    }
    let data = tape.data(emb.attention);
    let mut out = Vec::new();
    writeln!(out, ",{}", labels.join(","))?;
    for (i, label) in labels.iter().enumerate() {
        let row: Vec<String> = data[i * labels.len()..(i + 1) * labels.len()]
            .iter()
            .map(|v| v.to_string())
            .collect();
        writeln!(out, "{},{}", label, row.join(","))?;
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_rows(
    out: &mut Vec<u8>,
    clip_id: &str,
    object_id: u32,
    pathway: &str,
    rows: &PreparedRows,
    w_c: Option<&[f64]>,
    d_c: usize,
) -> HarnessResult<()> {
    for (j, &frame) in rows.frames.iter().enumerate() {
        let pooled = &rows.pooled[j * rows.width..(j + 1) * rows.width];
        for (channel, value) in pooled.iter().enumerate() {
            writeln!(
                out,
                "{clip_id},{object_id},{pathway},{frame},pooled,{channel},{value}"
            )?;
        }
        let corners = &rows.corners[j * 4..(j + 1) * 4];
        for channel in 0..d_c {
            let value = match w_c {
                Some(w) => (0..4).map(|k| w[channel * 4 + k] * corners[k]).sum::<f64>(),
                None => 0.0,
            };
            writeln!(
                out,
                "{clip_id},{object_id},{pathway},{frame},coord,{channel},{value}"
            )?;
        }
    }
    Ok(())
}

/// Writes every kept object's per-frame state rows as long-format CSV:
/// the pooled feature channels and the coordinate-embedding channels the
/// model would compute from them (zero when the variant disables
/// displacement coordinates).
pub fn write_state_csv(
    path: &Path,
    store: &ParamStore,
    cfg: &ModelConfig,
    prep: &PreparedClip,
) -> HarnessResult<()> {
    let w_c = if cfg.variant.use_disp {
        Some(store.get("ose.w_c")?.data.as_slice())
    } else {
        None
    };
    let mut out = Vec::new();
    writeln!(out, "clip_id,object_id,pathway,frame,kind,channel,value")?;
    for object in &prep.objects {
        write_rows(&mut out, &prep.clip_id, object.object_id, "slow", &object.slow, w_c, cfg.d_c)?;
        write_rows(&mut out, &prep.clip_id, object.object_id, "fast", &object.fast, w_c, cfg.d_c)?;
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::encoder::{encode_prepared, register_model_params};
    use crate::scene::{generate_dataset, render_grid_features};

    use super::super::ExperimentConfig;
    use super::*;

    fn fixture() -> (ModelConfig, ParamStore, PreparedClip) {
        let mut config = ExperimentConfig::default();
        config.dataset.clips_per_verb = 5;
        config.model.d_m = 16;
        config.model.heads = 2;
        config.model.d_c = 4;
        let clips = generate_dataset(&config.dataset.to_generator(), 11).unwrap();
        let cfg = config.model.to_model_config().unwrap();
        let mut store = ParamStore::new(3);
        register_model_params(&mut store, &cfg, 32, 8, 24).unwrap();
        let clip = &clips[0];
        let pack = render_grid_features(clip).unwrap();
        let prep = PreparedClip::from_pack(&cfg, clip, &pack).unwrap();
        (cfg, store, prep)
    }

    #[test]
    fn attention_csv_is_square_and_labeled() {
        let (cfg, store, prep) = fixture();
        let mut tape = Tape::new();
        let emb = encode_prepared(&mut tape, &store, &cfg, &prep).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("attention.csv");
        write_attention_csv(&path, &tape, &emb).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let n = emb.tokens.len();
        assert_eq!(lines.len(), n + 1);
        assert!(lines[0].starts_with(",video"));
        assert!(lines[1].starts_with("video,"));
        for line in &lines[1..] {
            let values: Vec<f64> = line
                .split(',')
                .skip(1)
                .map(|v| v.parse().unwrap())
                .collect();
            assert_eq!(values.len(), n);
            assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn state_csv_covers_every_frame_channel_pair() {
        let (cfg, store, prep) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.csv");
        write_state_csv(&path, &store, &cfg, &prep).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "clip_id,object_id,pathway,frame,kind,channel,value");
        let expected: usize = prep
            .objects
            .iter()
            .flat_map(|o| [&o.slow, &o.fast])
            .map(|rows| rows.len() * (rows.width + cfg.d_c))
            .sum();
        assert_eq!(lines.len() - 1, expected);
        // Coordinate rows reproduce the model's coordinate embedding: the
        // matrix product of the corner row with the coordinate weights.
        let w_c = &store.get("ose.w_c").unwrap().data;
        let rows = &prep.objects[0].slow;
        let want: f64 = (0..4).map(|k| w_c[k] * rows.corners[k]).sum();
        let line = lines[1 + rows.width..].iter().next().unwrap();
        let got: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn disabled_displacement_zeroes_the_coordinate_rows() {
        let (mut cfg, store, prep) = fixture();
        cfg.variant.use_disp = false;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.csv");
        write_state_csv(&path, &store, &cfg, &prep).unwrap();
        for line in std::fs::read_to_string(&path).unwrap().lines().skip(1) {
            if line.contains(",coord,") {
                assert!(line.ends_with(",0"));
            }
        }
    }
}
