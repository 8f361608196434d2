//! Dataset files: a `clips.jsonl` manifest plus one EVGF binary per
//! pathway per clip.
//!
//! EVGF layout: 5-byte magic `EVGF1`, little-endian u32 header length, a
//! JSON header `{shape, dtype, order, pathway}`, then the row-major
//! little-endian f32 payload.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::{render_grid_features, GridFeaturePack, GridTensor};
use super::{ClipRecord, SceneError, SceneResult};

const MAGIC: &[u8; 5] = b"EVGF1";

#[derive(Serialize, Deserialize)]
struct EvgfHeader {
    shape: Vec<usize>,
    dtype: String,
    order: String,
    pathway: String,
}

/// Writes one pathway tensor. Values are stored as f32.
pub fn write_evgf(path: &Path, tensor: &GridTensor, pathway: &str) -> SceneResult<()> {
    let header = EvgfHeader {
        shape: tensor.shape().to_vec(),
        dtype: "f32".to_string(),
        order: "row-major".to_string(),
        pathway: pathway.to_string(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(5 + 4 + header_bytes.len() + tensor.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for &v in &tensor.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads one pathway tensor; returns it with the pathway tag from the
/// header. Widening f32 to f64 is exact, so read-write cycles are stable.
pub fn read_evgf(path: &Path) -> SceneResult<(GridTensor, String)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 5 || &bytes[..5] != MAGIC {
        return Err(SceneError::BadMagic);
    }
    if bytes.len() < 9 {
        return Err(SceneError::Truncated { offset: bytes.len() });
    }
    let header_len = u32::from_le_bytes([bytes[5], bytes[6], bytes[7], bytes[8]]) as usize;
    let payload_at = 9 + header_len;
    if bytes.len() < payload_at {
        return Err(SceneError::Truncated { offset: bytes.len() });
    }
    let header: EvgfHeader = serde_json::from_slice(&bytes[9..payload_at])?;
    if header.dtype != "f32" || header.order != "row-major" {
        return Err(SceneError::BadHeader {
            what: format!("dtype {} order {}", header.dtype, header.order),
        });
    }
    if header.shape.len() != 4 {
        return Err(SceneError::BadHeader {
            what: format!("expected 4-axis shape, got {:?}", header.shape),
        });
    }
    let numel: usize = header.shape.iter().product();
    let expected = payload_at + numel * 4;
    if bytes.len() != expected {
        return Err(SceneError::Truncated {
            offset: bytes.len().min(expected),
        });
    }
    let mut data = Vec::with_capacity(numel);
    for chunk in bytes[payload_at..].chunks_exact(4) {
        data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64);
    }
    Ok((
        GridTensor {
            frames: header.shape[0],
            grid_w: header.shape[1],
            grid_h: header.shape[2],
            channels: header.shape[3],
            data,
        },
        header.pathway,
    ))
}

/// Writes `clips.jsonl` plus rendered feature files under `dir`.
pub fn write_dataset(dir: &Path, clips: &[ClipRecord]) -> SceneResult<()> {
    fs::create_dir_all(dir.join("features"))?;
    let mut manifest = fs::File::create(dir.join("clips.jsonl"))?;
    for clip in clips {
        let pack = render_grid_features(clip)?;
        write_evgf(&dir.join(&clip.slow_file), &pack.slow, "slow")?;
        write_evgf(&dir.join(&clip.fast_file), &pack.fast, "fast")?;
        let line = serde_json::to_string(clip)?;
        manifest.write_all(line.as_bytes())?;
        manifest.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the manifest back. Feature tensors are loaded on demand via
/// [`load_features`].
pub fn read_dataset(dir: &Path) -> SceneResult<Vec<ClipRecord>> {
    let text = fs::read_to_string(dir.join("clips.jsonl"))?;
    let mut clips = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        clips.push(serde_json::from_str::<ClipRecord>(line)?);
    }
    Ok(clips)
}

/// Loads both pathway files of one clip and checks them against the
/// record's dims.
pub fn load_features(dir: &Path, clip: &ClipRecord) -> SceneResult<GridFeaturePack> {
    let (slow, slow_tag) = read_evgf(&dir.join(&clip.slow_file))?;
    let (fast, fast_tag) = read_evgf(&dir.join(&clip.fast_file))?;
    let expect_slow = [
        clip.f1 as usize,
        clip.grid_w as usize,
        clip.grid_h as usize,
        clip.d1 as usize,
    ];
    let expect_fast = [
        clip.f2 as usize,
        clip.grid_w as usize,
        clip.grid_h as usize,
        clip.d2 as usize,
    ];
    if slow_tag != "slow" || slow.shape() != expect_slow {
        return Err(SceneError::BadHeader {
            what: format!(
                "slow file for {}: pathway {slow_tag}, shape {:?}, want {expect_slow:?}",
                clip.clip_id,
                slow.shape()
            ),
        });
    }
    if fast_tag != "fast" || fast.shape() != expect_fast {
        return Err(SceneError::BadHeader {
            what: format!(
                "fast file for {}: pathway {fast_tag}, shape {:?}, want {expect_fast:?}",
                clip.clip_id,
                fast.shape()
            ),
        });
    }
    Ok(GridFeaturePack { slow, fast })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_dataset, DatasetConfig};

    fn tiny() -> Vec<ClipRecord> {
        let config = DatasetConfig {
            clips_per_verb: 5,
            ..DatasetConfig::desk()
        };
        generate_dataset(&config, 5).unwrap()
    }

    #[test]
    fn manifest_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let clips = tiny();
        write_dataset(dir.path(), &clips).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(clips, back);
    }

    #[test]
    fn same_seed_writes_byte_identical_manifests() {
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_dataset(da.path(), &tiny()).unwrap();
        write_dataset(db.path(), &tiny()).unwrap();
        let a = fs::read(da.path().join("clips.jsonl")).unwrap();
        let b = fs::read(db.path().join("clips.jsonl")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn feature_container_is_stable_after_first_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let clips = tiny();
        write_dataset(dir.path(), &clips).unwrap();
        let clip = &clips[0];
        let first = dir.path().join(&clip.slow_file);
        let (tensor, pathway) = read_evgf(&first).unwrap();
        assert_eq!(pathway, "slow");
        let again = dir.path().join("rewrite.evgf");
        write_evgf(&again, &tensor, &pathway).unwrap();
        assert_eq!(fs::read(&first).unwrap(), fs::read(&again).unwrap());
        let (tensor2, _) = read_evgf(&again).unwrap();
        let max_delta = tensor
            .data
            .iter()
            .zip(&tensor2.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(max_delta, 0.0);
    }

    #[test]
    fn loaded_features_match_the_quantized_render() {
        let dir = tempfile::tempdir().unwrap();
        let clips = tiny();
        write_dataset(dir.path(), &clips).unwrap();
        let clip = &clips[3];
        let pack = load_features(dir.path(), clip).unwrap();
        let rendered = crate::scene::render_grid_features(clip).unwrap();
        for (a, b) in pack.fast.data.iter().zip(&rendered.fast.data) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.evgf");
        fs::write(&path, b"EVGF2junkjunkjunk").unwrap();
        match read_evgf(&path) {
            Err(SceneError::BadMagic) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
        assert!(SceneError::BadMagic.to_string().contains("bad EVGF magic"));
    }

    #[test]
    fn truncated_payload_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let clips = tiny();
        write_dataset(dir.path(), &clips).unwrap();
        let path = dir.path().join(&clips[0].fast_file);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        let cut = dir.path().join("cut.evgf");
        fs::write(&cut, &bytes).unwrap();
        match read_evgf(&cut) {
            Err(SceneError::Truncated { offset }) => assert_eq!(offset, bytes.len()),
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn pathway_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let clips = tiny();
        write_dataset(dir.path(), &clips).unwrap();
        let clip = &clips[0];
        // swap the two files
        let slow = dir.path().join(&clip.slow_file);
        let fast = dir.path().join(&clip.fast_file);
        let tmp = dir.path().join("swap");
        fs::rename(&slow, &tmp).unwrap();
        fs::rename(&fast, &slow).unwrap();
        fs::rename(&tmp, &fast).unwrap();
        assert!(matches!(
            load_features(dir.path(), clip),
            Err(SceneError::BadHeader { .. })
        ));
    }
}
