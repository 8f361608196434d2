//! Run artifacts: the report document every command writes, content-hashed
//! append-only report files, and parameter snapshots that rebuild a store
//! bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::tensor::{fnv1a64, ParamStore, Tensor};

use super::{ExperimentConfig, HarnessError, HarnessResult};

/// Everything needed to audit one run: the full configuration, the loss
/// trajectory, final metrics, and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Which command produced the report.
    pub command: String,
    /// Complete configuration snapshot.
    pub config: ExperimentConfig,
    /// Seed the run actually used (the config seed unless a protocol
    /// varied it).
    pub seed: u64,
    /// Source revision the binary was built from, when discoverable.
    pub source_hash: String,
    pub wall_clock_secs: f64,
    /// Mean loss of every optimizer step, in order.
    pub batch_losses: Vec<f64>,
    /// Mean loss per epoch (empty for step-driven runs).
    pub epoch_losses: Vec<f64>,
    /// Final scalar metrics.
    pub metrics: BTreeMap<String, f64>,
    /// Per-seed metric values from multi-seed protocols.
    pub seed_metrics: BTreeMap<String, Vec<f64>>,
}

impl RunReport {
    pub fn new(command: &str, config: &ExperimentConfig, seed: u64) -> Self {
        RunReport {
            command: command.to_string(),
            config: config.clone(),
            seed,
            source_hash: source_hash(),
            wall_clock_secs: 0.0,
            batch_losses: Vec::new(),
            epoch_losses: Vec::new(),
            metrics: BTreeMap::new(),
            seed_metrics: BTreeMap::new(),
        }
    }
}

/// Mean and sample standard deviation (n − 1 divisor; 0 for a single
/// value), the convention behind "mean ± std" result tables.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Current source revision: the commit a `.git` directory at or above the
/// working directory points to, else `"unknown"`. Reads the files directly
/// so no external tool is needed.
pub fn source_hash() -> String {
    let mut dir = match std::env::current_dir() {
        Ok(d) => d,
        Err(_) => return "unknown".into(),
    };
    for _ in 0..6 {
        let git = dir.join(".git");
        if git.is_dir() {
            return read_git_head(&git).unwrap_or_else(|| "unknown".into());
        }
        if !dir.pop() {
            break;
        }
    }
    "unknown".into()
}

fn read_git_head(git: &Path) -> Option<String> {
    let head = std::fs::read_to_string(git.join("HEAD")).ok()?;
    let head = head.trim();
    if let Some(reference) = head.strip_prefix("ref: ") {
        if let Ok(commit) = std::fs::read_to_string(git.join(reference)) {
            return Some(commit.trim().to_string());
        }
        // Packed refs hold the pointer when the loose file is absent.
        let packed = std::fs::read_to_string(git.join("packed-refs")).ok()?;
        for line in packed.lines() {
            if let Some(hash) = line.strip_suffix(reference) {
                return Some(hash.trim().to_string());
            }
        }
        return None;
    }
    Some(head.to_string())
}

/// File name a report serializes under: a hash of its content, so files
/// are append-only and identical runs collide only on identical bytes.
pub fn report_file_name(json: &str) -> String {
    format!("report-{:016x}.json", fnv1a64(json.as_bytes()))
}

/// Writes the report into `dir` under its content-hash name and returns
/// the path. An existing file with the same name already holds the same
/// content and is left untouched.
pub fn write_report(dir: &Path, report: &RunReport) -> HarnessResult<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    let path = dir.join(report_file_name(&json));
    if !path.exists() {
        std::fs::write(&path, json)?;
    }
    Ok(path)
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    seed: u64,
    tensors: BTreeMap<String, TensorEntry>,
}

/// Saves every parameter in the store. JSON floats round-trip exactly, so
/// a reload reproduces each value bit for bit.
pub fn save_params(path: &Path, store: &ParamStore) -> HarnessResult<()> {
    let tensors = store
        .iter()
        .map(|(name, t)| {
            (
                name.to_string(),
                TensorEntry {
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                },
            )
        })
        .collect();
    let file = ParamFile {
        seed: store.seed(),
        tensors,
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

/// Rebuilds a store from a parameter snapshot.
pub fn load_params(path: &Path) -> HarnessResult<ParamStore> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::MissingModelFile {
        dir: path
            .parent()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        file: format!("{} ({e})", path.file_name().unwrap_or_default().to_string_lossy()),
    })?;
    let file: ParamFile = serde_json::from_str(&text)?;
    let mut store = ParamStore::new(file.seed);
    for (name, entry) in file.tensors {
        let mut tensor = Tensor::new(entry.shape, entry.data)?;
        tensor.requires_grad = true;
        store.insert(&name, tensor)?;
    }
    Ok(store)
}
