//! The full ablation grid: every combination of embedding variant,
//! aggregator, and object cap, trained and evaluated under one base
//! configuration.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::data::{prepare_clips, LabeledDataset, VerbExample};
use super::eval::evaluate_verb;
use super::report::{write_report, RunReport};
use super::train::train_verb;
use super::{ExperimentConfig, FeatureSource, HarnessError, HarnessResult};

/// The three embedding variants, ablation-grid order.
pub const VARIANT_AXIS: [&str; 3] = [
    "ose-pixel+ome",
    "ose-pixel/disp+ome",
    "ose-pixel/disp+ome+oie",
];

/// The two sequence aggregators.
pub const AGGREGATOR_AXIS: [&str; 2] = ["mean", "lstm"];

/// The three object caps.
pub const O_MAX_AXIS: [usize; 3] = [2, 4, 8];

/// Expands a base configuration into the 3×2×3 ablation grid, variant
/// varying slowest. Every produced configuration is validated.
pub fn ablation_configs(base: &ExperimentConfig) -> HarnessResult<Vec<ExperimentConfig>> {
    let mut configs = Vec::with_capacity(18);
    for variant in VARIANT_AXIS {
        for aggregator in AGGREGATOR_AXIS {
            for o_max in O_MAX_AXIS {
                let mut config = base.clone();
                config.model.variant = variant.to_string();
                config.model.aggregator = aggregator.to_string();
                config.model.o_max = o_max;
                config.validate()?;
                configs.push(config);
            }
        }
    }
    Ok(configs)
}

struct PreparedSplit {
    o_max: usize,
    train: Vec<VerbExample>,
    val: Vec<VerbExample>,
}

fn run_one(
    config: &ExperimentConfig,
    splits: &[PreparedSplit],
    out_dir: &Path,
) -> HarnessResult<PathBuf> {
    let split = splits
        .iter()
        .find(|s| s.o_max == config.model.o_max)
        .expect("every grid o_max was prepared");
    let trained = train_verb(config, &split.train)?;
    let eval = evaluate_verb(&trained.store, &trained.model_cfg, &split.val)?;
    let mut report = RunReport::new("ablate", config, config.seed);
    report.batch_losses = trained.batch_losses;
    report.epoch_losses = trained.epoch_losses;
    report.wall_clock_secs = trained.secs;
    report.metrics.insert("acc_at_1".into(), eval.acc1);
    report.metrics.insert("acc_at_5".into(), eval.acc5);
    report.metrics.insert("rec_at_5".into(), eval.rec5);
    report.metrics.insert("f1_at_5".into(), eval.f15);
    write_report(out_dir, &report)
}

/// Trains and evaluates all 18 grid cells, writing one report per cell
/// into `out_dir`. Clip preparation is shared across cells with the same
/// object cap. `threads` workers run cells in parallel; each cell is
/// seeded identically regardless of scheduling, so the reports do not
/// depend on `threads`. Returns the report paths in grid order.
pub fn run_ablation(
    base: &ExperimentConfig,
    dataset: &LabeledDataset,
    features: &FeatureSource,
    out_dir: &Path,
    threads: usize,
) -> HarnessResult<Vec<PathBuf>> {
    let configs = ablation_configs(base)?;
    let mut splits = Vec::with_capacity(O_MAX_AXIS.len());
    for o_max in O_MAX_AXIS {
        let mut config = base.clone();
        config.model.o_max = o_max;
        let cfg = config.model.to_model_config()?;
        splits.push(PreparedSplit {
            o_max,
            train: prepare_clips(&cfg, &dataset.train, features)?,
            val: prepare_clips(&cfg, &dataset.val, features)?,
        });
    }
    let workers = threads.max(1).min(configs.len());
    let next = AtomicUsize::new(0);
    let paths: Mutex<Vec<Option<PathBuf>>> = Mutex::new(vec![None; configs.len()]);
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let ix = next.fetch_add(1, Ordering::SeqCst);
                if ix >= configs.len() {
                    return;
                }
                match run_one(&configs[ix], &splits, out_dir) {
                    Ok(path) => paths.lock().unwrap()[ix] = Some(path),
                    Err(err) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(err);
                        }
                        return;
                    }
                }
            });
        }
    });
    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }
    Ok(paths
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|p| p.expect("every cell finished"))
        .collect())
}
