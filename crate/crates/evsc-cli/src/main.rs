//! `evsc` — the experiment driver: dataset generation, verb and role
//! training, evaluation, the ablation grid, and inspection dumps. Every
//! subcommand is deterministic in (config, seed); commands read their
//! inputs and write only under their output paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use evsc_core::encoder::PreparedClip;
use evsc_core::harness::{
    evaluate_roles, evaluate_verb, freeze_videos, load_params, prepare_clips, role_seed_protocol,
    run_ablation, save_params, split_dataset, train_role, train_verb, write_attention_csv,
    write_metrics_json, write_report, write_state_csv, write_verb_csv, ExperimentConfig,
    FeatureSource, LabeledDataset, RunReport,
};
use evsc_core::metrics::{acc_at_k, f1_at_5, rec_at_5, verb_breakdown, VerbEvalRecord};
use evsc_core::scene::{generate_dataset, load_features, read_dataset, write_dataset, ClipRecord};
use evsc_core::tensor::Tape;

#[derive(Parser)]
#[command(
    name = "evsc",
    version,
    about = "Event extraction experiments on synthetic grid-feature videos"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset: clip manifest plus rendered feature files.
    Generate {
        /// Experiment config (strict JSON; unknown keys rejected).
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the verb classifier and report validation metrics.
    TrainVerb {
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Output model directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the role decoder on a frozen verb model, then run the
    /// multi-seed evaluation protocol.
    TrainRole {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Verb model directory written by `train-verb`.
        #[arg(long)]
        verb_model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on one split, writing metrics JSON and a per-verb CSV.
    Eval {
        /// Model directory (verb, or verb+role) to score.
        #[arg(long, required_unless_present = "predictions")]
        model: Option<PathBuf>,
        #[arg(long, required_unless_present = "predictions")]
        data: Option<PathBuf>,
        /// Which side of the train/val split to score.
        #[arg(long, default_value = "val")]
        split: String,
        /// Where to write the metrics JSON; the per-verb CSV lands next to
        /// it with a .csv extension.
        #[arg(long)]
        report: PathBuf,
        /// Score a ranked-predictions JSONL directly instead of a model.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Train and evaluate the full variant × aggregator × object-cap grid.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Directory receiving the 18 run reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump one clip's encoder attention and per-frame object states.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Clip id to inspect.
        #[arg(long)]
        clip: String,
        /// Attention CSV path; the state CSV lands next to it with a
        /// .state.csv extension.
        #[arg(long)]
        dump_attention: PathBuf,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Generate { config, out } => cmd_generate(&config, &out),
        Command::TrainVerb { config, data, out } => cmd_train_verb(&config, &data, &out),
        Command::TrainRole {
            config,
            data,
            verb_model,
            out,
        } => cmd_train_role(&config, &data, &verb_model, &out),
        Command::Eval {
            model,
            data,
            split,
            report,
            predictions,
        } => cmd_eval(
            model.as_deref(),
            data.as_deref(),
            &split,
            &report,
            predictions.as_deref(),
        ),
        Command::Ablate { config, data, out } => cmd_ablate(&config, &data, &out),
        Command::Inspect {
            model,
            data,
            clip,
            dump_attention,
        } => cmd_inspect(&model, &data, &clip, &dump_attention),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn load_split(config: &ExperimentConfig, data: &Path) -> Result<LabeledDataset> {
    let clips = read_dataset(data).with_context(|| format!("reading dataset {}", data.display()))?;
    Ok(split_dataset(
        clips,
        config.dataset.train_clips as usize,
        config.dataset.val_clips as usize,
    )?)
}

fn cmd_generate(config_path: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let clips = generate_dataset(&config.dataset.to_generator(), config.seed)?;
    write_dataset(out, &clips)?;
    config.save(&out.join("config.json"))?;
    println!(
        "wrote {} clips ({} videos) to {}",
        clips.len(),
        clips.len() / 5,
        out.display()
    );
    Ok(())
}

fn cmd_train_verb(config_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let split = load_split(&config, data)?;
    let source = FeatureSource::Dir(data.to_path_buf());
    let cfg = config.model.to_model_config()?;
    let train = prepare_clips(&cfg, &split.train, &source)?;
    let val = prepare_clips(&cfg, &split.val, &source)?;
    let model = train_verb(&config, &train)?;
    let eval = evaluate_verb(&model.store, &model.model_cfg, &val)?;

    std::fs::create_dir_all(out)?;
    save_params(&out.join("params.json"), &model.store)?;
    config.save(&out.join("config.json"))?;
    let mut report = RunReport::new("train-verb", &config, config.seed);
    report.batch_losses = model.batch_losses;
    report.epoch_losses = model.epoch_losses;
    report.wall_clock_secs = model.secs;
    report.metrics.insert("acc_at_1".into(), eval.acc1);
    report.metrics.insert("acc_at_5".into(), eval.acc5);
    report.metrics.insert("rec_at_5".into(), eval.rec5);
    report.metrics.insert("f1_at_5".into(), eval.f15);
    let path = write_report(out, &report)?;
    println!(
        "val acc@1 {:.4}  acc@5 {:.4}  rec@5 {:.4}  f1@5 {:.4}",
        eval.acc1, eval.acc5, eval.rec5, eval.f15
    );
    println!("report: {}", path.display());
    Ok(())
}

fn cmd_train_role(config_path: &Path, data: &Path, verb_model: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let verb_config = load_config(&verb_model.join("config.json"))?;
    if verb_config.model != config.model {
        bail!("config model section does not match the verb model's; role training re-encodes clips with the verb model's encoder");
    }
    if verb_config.dataset != config.dataset {
        bail!("config dataset section does not match the verb model's");
    }
    let split = load_split(&config, data)?;
    let source = FeatureSource::Dir(data.to_path_buf());
    let cfg = verb_config.model.to_model_config()?;
    let verb_store = load_params(&verb_model.join("params.json"))?;
    let snapshot: Vec<(String, Vec<f64>)> = verb_store
        .iter()
        .map(|(name, tensor)| (name.to_string(), tensor.data.clone()))
        .collect();

    let train_videos = freeze_videos(&verb_store, &cfg, &split.train, &source)?;
    let val_videos = freeze_videos(&verb_store, &cfg, &split.val, &source)?;
    let trained = train_role(&config, &train_videos, config.seed)?;
    for (name, before) in &snapshot {
        let after = &verb_store
            .get(name)
            .map_err(|e| anyhow!("{e}"))?
            .data;
        if after != before {
            bail!("freeze contract violated: encoder parameter {name} changed during role training");
        }
    }
    let eval = evaluate_roles(&trained.store, &trained.role_cfg, &val_videos)?;
    let protocol = role_seed_protocol(&config, &train_videos, &val_videos)?;

    std::fs::create_dir_all(out)?;
    save_params(&out.join("role-params.json"), &trained.store)?;
    save_params(&out.join("params.json"), &verb_store)?;
    config.save(&out.join("config.json"))?;
    let mut report = RunReport::new("train-role", &config, config.seed);
    report.batch_losses = trained.step_losses;
    report.wall_clock_secs = trained.secs;
    report.metrics.insert("cider_d".into(), eval.cider);
    report.metrics.insert("rouge_l".into(), eval.rouge);
    report.metrics.extend(protocol.summary.clone());
    report.seed_metrics = protocol.per_seed;
    let path = write_report(out, &report)?;
    println!(
        "val cider-d {:.4}  rouge-l {:.4}  ({} seeds: cider-d {:.4} ± {:.4})",
        eval.cider,
        eval.rouge,
        config.eval_seeds.len(),
        protocol.summary["cider_d_mean"],
        protocol.summary["cider_d_std"],
    );
    println!("report: {}", path.display());
    Ok(())
}

fn eval_predictions(predictions: &Path, report: &Path) -> Result<()> {
    let text = std::fs::read_to_string(predictions)
        .with_context(|| format!("reading predictions {}", predictions.display()))?;
    let mut records = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        records.push(serde_json::from_str::<VerbEvalRecord>(line)?);
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("acc_at_1".to_string(), acc_at_k(&records, 1)?);
    metrics.insert("acc_at_5".to_string(), acc_at_k(&records, 5)?);
    metrics.insert("rec_at_5".to_string(), rec_at_5(&records)?);
    metrics.insert("f1_at_5".to_string(), f1_at_5(&records)?);
    write_metrics_json(report, &metrics)?;
    write_verb_csv(&report.with_extension("csv"), &verb_breakdown(&records)?)?;
    print_metrics(&metrics, report);
    Ok(())
}

fn print_metrics(metrics: &BTreeMap<String, f64>, report: &Path) {
    for (name, value) in metrics {
        println!("{name} {value:.4}");
    }
    println!("report: {}", report.display());
}

fn cmd_eval(
    model: Option<&Path>,
    data: Option<&Path>,
    split_name: &str,
    report: &Path,
    predictions: Option<&Path>,
) -> Result<()> {
    if let Some(predictions) = predictions {
        return eval_predictions(predictions, report);
    }
    let model = model.expect("clap requires --model without --predictions");
    let data = data.expect("clap requires --data without --predictions");
    let config = load_config(&model.join("config.json"))?;
    let split = load_split(&config, data)?;
    let clips = match split_name {
        "train" => &split.train,
        "val" => &split.val,
        other => bail!("unknown split {other:?}: expected train or val"),
    };
    let source = FeatureSource::Dir(data.to_path_buf());
    let cfg = config.model.to_model_config()?;
    let store = load_params(&model.join("params.json"))?;
    let examples = prepare_clips(&cfg, clips, &source)?;
    let eval = evaluate_verb(&store, &cfg, &examples)?;
    let mut metrics = BTreeMap::new();
    metrics.insert("acc_at_1".to_string(), eval.acc1);
    metrics.insert("acc_at_5".to_string(), eval.acc5);
    metrics.insert("rec_at_5".to_string(), eval.rec5);
    metrics.insert("f1_at_5".to_string(), eval.f15);

    let role_params = model.join("role-params.json");
    if role_params.exists() {
        let role_store = load_params(&role_params)?;
        let role_cfg = config.role.to_role_config();
        let videos = freeze_videos(&store, &cfg, clips, &source)?;
        let roles = evaluate_roles(&role_store, &role_cfg, &videos)?;
        metrics.insert("cider_d".to_string(), roles.cider);
        metrics.insert("rouge_l".to_string(), roles.rouge);
    }
    write_metrics_json(report, &metrics)?;
    write_verb_csv(&report.with_extension("csv"), &eval.stats)?;
    print_metrics(&metrics, report);
    Ok(())
}

fn cmd_ablate(config_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let split = load_split(&config, data)?;
    let threads = match std::env::var("EVSC_THREADS") {
        Ok(text) => text
            .parse::<usize>()
            .with_context(|| format!("EVSC_THREADS must be a positive integer, got {text:?}"))?,
        Err(_) => 1,
    };
    let source = FeatureSource::Dir(data.to_path_buf());
    let paths = run_ablation(&config, &split, &source, out, threads)?;
    for path in &paths {
        println!("{}", path.display());
    }
    println!("{} reports in {}", paths.len(), out.display());
    Ok(())
}

fn find_clip<'a>(clips: &'a [ClipRecord], clip_id: &str) -> Result<&'a ClipRecord> {
    clips
        .iter()
        .find(|c| c.clip_id == clip_id)
        .ok_or_else(|| anyhow!("clip {clip_id} is not in the dataset"))
}

fn cmd_inspect(model: &Path, data: &Path, clip_id: &str, dump_attention: &Path) -> Result<()> {
    let config = load_config(&model.join("config.json"))?;
    let cfg = config.model.to_model_config()?;
    let store = load_params(&model.join("params.json"))?;
    let clips = read_dataset(data)?;
    let clip = find_clip(&clips, clip_id)?;
    let pack = load_features(data, clip)?;
    let prep = PreparedClip::from_pack(&cfg, clip, &pack)?;
    let mut tape = Tape::new();
    let emb = evsc_core::encoder::encode_prepared(&mut tape, &store, &cfg, &prep)?;
    write_attention_csv(dump_attention, &tape, &emb)?;
    let state_path = dump_attention.with_extension("state.csv");
    write_state_csv(&state_path, &store, &cfg, &prep)?;
    println!("attention: {}", dump_attention.display());
    println!("states:    {}", state_path.display());
    Ok(())
}
