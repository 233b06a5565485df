use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bagstack::augment::MaskMode;
use bagstack::corpus::{compute_stats, load_dataset};
use bagstack::ensemble::{Aggregation, EnsembleConfig};
use bagstack::error::{Error, Result};
use bagstack::pipeline::{self, FamilySelection, RunConfig, TrainRequest};
use bagstack::store::SnapshotStore;
use bagstack::synth::{synth, DEFAULT_IMBALANCE};

#[derive(Parser)]
#[command(name = "bagstack", version, about = "Snapshot bagging and stacking ensembles for multilabel text")]
struct Cli {
    /// Run config (TOML); flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory for split, samples, store and outputs.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print a readable listing instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label statistics of a dataset.
    Stats(DataArgs),
    /// Generate a synthetic benchmark dataset.
    Synth(SynthArgs),
    /// Split the dataset and build the augmented training samples.
    Augment(AugmentArgs),
    /// Train every (family, sample) model and record per-epoch snapshots.
    Train(TrainArgs),
    /// Build an ensemble from the snapshot store and report it.
    Ensemble(EnsembleArgs),
    /// Export ensemble soft labels and train a linear student on them.
    Distill(DistillArgs),
    /// Score a prediction matrix or a recorded ensemble.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Default)]
struct DataArgs {
    /// Dataset (JSON lines).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label space file, one name per line.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of documents.
    #[arg(long, default_value_t = 2000)]
    n_docs: usize,
    /// Majority/minority label count ratio.
    #[arg(long, default_value_t = DEFAULT_IMBALANCE)]
    imbalance: f64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Terms to mask, one per line; defaults to the bundled COVID-19 list.
    #[arg(long)]
    mask_lexicon: Option<PathBuf>,
    /// Tab-separated synonym lexicon; defaults to the bundled one.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Fraction of documents held out for validation.
    #[arg(long)]
    val_fraction: Option<f64>,
    /// Only the title-first field order.
    #[arg(long)]
    no_field_order: bool,
    /// Skip the lexicon-masking arm.
    #[arg(long)]
    no_mask: bool,
    /// Skip the synonym/noise perturbation arm.
    #[arg(long)]
    no_perturb: bool,
    /// mask (replace with [mask]) or delete.
    #[arg(long, value_parser = parse_mask_mode)]
    mask_mode: Option<MaskMode>,
    /// Per-token synonym substitution probability.
    #[arg(long)]
    substitution_rate: Option<f64>,
    /// Per-token vocabulary noise probability.
    #[arg(long)]
    noise_rate: Option<f64>,
    /// Truncate serialized rows to this many tokens.
    #[arg(long)]
    max_tokens: Option<usize>,
    /// Subsample target as a fraction of the training split.
    #[arg(long)]
    subsample_fraction: Option<f64>,
    /// Subsample target row count; overrides the fraction.
    #[arg(long)]
    subsample_target: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    augment: AugmentArgs,
    /// Number of families to train, or a comma-separated list of ids.
    #[arg(long)]
    families: Option<FamilySelection>,
    /// Train on the first N samples only.
    #[arg(long)]
    samples: Option<usize>,
    /// Worker threads for independent training runs.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Passes over each sample.
    #[arg(long)]
    epochs: Option<usize>,
    /// SGD step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Rows per mini-batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// L2 penalty on the weights.
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Args, Default)]
struct StrategyArgs {
    /// Ensemble config file (TOML key = value).
    #[arg(long)]
    ensemble_config: Option<PathBuf>,
    /// bag-k, bag-samples, bag-pooled, meta-k, meta-adaptive or meta-ensemble.
    #[arg(long)]
    strategy: Option<String>,
    /// Snapshots per model.
    #[arg(long)]
    k: Option<usize>,
    /// Snapshots per sample.
    #[arg(long)]
    n: Option<usize>,
    /// Members kept from the pooled snapshots.
    #[arg(long)]
    m: Option<usize>,
    /// Smallest adaptive k.
    #[arg(long)]
    k_min: Option<usize>,
    /// Largest adaptive k.
    #[arg(long)]
    k_max: Option<usize>,
    /// Comma-separated family ids for stacking.
    #[arg(long = "families", value_delimiter = ',')]
    ensemble_families: Option<Vec<String>>,
    /// Family for sample bagging.
    #[arg(long)]
    family: Option<String>,
    /// Model id for epoch bagging.
    #[arg(long)]
    model: Option<String>,
    /// Binarization threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// mean-probability or parameter-mean.
    #[arg(long, value_parser = parse_aggregation)]
    aggregation: Option<Aggregation>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Snapshot store directory; defaults to <workdir>/store.
    #[arg(long, env = "BAGSTACK_STORE")]
    store: Option<PathBuf>,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Emit a metric-versus-k CSV for k in the range, e.g. 1..8.
    #[arg(long)]
    sweep_k: Option<String>,
    /// Output directory (or CSV path with --sweep-k).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    /// Snapshot store directory; defaults to <workdir>/store.
    #[arg(long, env = "BAGSTACK_STORE")]
    store: Option<PathBuf>,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Student family id.
    #[arg(long)]
    student_family: Option<String>,
    /// Sample id the student trains on.
    #[arg(long)]
    student_sample: Option<String>,
    /// Student training epochs.
    #[arg(long)]
    student_epochs: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Snapshot store directory; defaults to <workdir>/store.
    #[arg(long, env = "BAGSTACK_STORE")]
    store: Option<PathBuf>,
    /// Prediction matrix CSV to score.
    #[arg(long, conflicts_with = "ensemble")]
    predictions: Option<PathBuf>,
    /// Truth matrix CSV; defaults to the store truth.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Recorded ensemble.json to rebuild and score.
    #[arg(long)]
    ensemble: Option<PathBuf>,
    /// Binarization threshold.
    #[arg(long)]
    threshold: Option<f64>,
}

fn parse_mask_mode(s: &str) -> std::result::Result<MaskMode, String> {
    match s {
        "mask" => Ok(MaskMode::Mask),
        "delete" => Ok(MaskMode::Delete),
        _ => Err(format!("expected mask or delete, got {s:?}")),
    }
}

fn parse_aggregation(s: &str) -> std::result::Result<Aggregation, String> {
    match s {
        "mean-probability" => Ok(Aggregation::MeanProbability),
        "parameter-mean" => Ok(Aggregation::ParameterMean),
        _ => Err(format!("expected mean-probability or parameter-mean, got {s:?}")),
    }
}

fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(w) = &cli.workdir {
        cfg.workdir = w.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, a: &DataArgs) {
    if a.dataset.is_some() {
        cfg.dataset = a.dataset.clone();
    }
    if a.labels.is_some() {
        cfg.labels = a.labels.clone();
    }
}

fn apply_augment(cfg: &mut RunConfig, a: &AugmentArgs) {
    apply_data(cfg, &a.data);
    let s = &mut cfg.augment;
    if a.mask_lexicon.is_some() {
        cfg.mask_lexicon = a.mask_lexicon.clone();
    }
    if a.synonyms.is_some() {
        cfg.synonyms = a.synonyms.clone();
    }
    if let Some(v) = a.val_fraction {
        cfg.val_fraction = v;
    }
    s.field_order &= !a.no_field_order;
    s.mask &= !a.no_mask;
    s.perturb &= !a.no_perturb;
    s.mask_mode = a.mask_mode.unwrap_or(s.mask_mode);
    s.substitution_rate = a.substitution_rate.unwrap_or(s.substitution_rate);
    s.noise_rate = a.noise_rate.unwrap_or(s.noise_rate);
    s.max_tokens = a.max_tokens.unwrap_or(s.max_tokens);
    s.subsample_fraction = a.subsample_fraction.unwrap_or(s.subsample_fraction);
    if a.subsample_target.is_some() {
        s.subsample_target = a.subsample_target;
    }
}

fn apply_train(cfg: &mut RunConfig, a: &TrainArgs) {
    apply_augment(cfg, &a.augment);
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.learning_rate = a.learning_rate.unwrap_or(t.learning_rate);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.l2 = a.l2.unwrap_or(t.l2);
}

fn strategy_config(cfg: &RunConfig, a: &StrategyArgs) -> Result<EnsembleConfig> {
    let file = match &a.ensemble_config {
        Some(p) => EnsembleConfig::parse(&bagstack::io::read_to_string(p)?)?,
        None => EnsembleConfig::default(),
    };
    let flags = EnsembleConfig {
        strategy: a.strategy.clone(),
        k: a.k,
        n: a.n,
        m: a.m,
        k_min: a.k_min,
        k_max: a.k_max,
        families: a.ensemble_families.clone(),
        family: a.family.clone(),
        model: a.model.clone(),
        threshold: a.threshold,
        aggregation: a.aggregation,
    };
    Ok(cfg.ensemble.clone().merged(file).merged(flags))
}

fn store_path(cfg: &RunConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.layout().store_dir())
}

fn emit<T: Serialize>(value: &T, pretty: bool) -> Result<()> {
    let json = serde_json::to_value(value)?;
    let mut out = String::new();
    if pretty {
        render(&json, 0, &mut out);
    } else {
        out = serde_json::to_string_pretty(&json)? + "\n";
    }
    // a closed pipe (`| head`) is not an error worth reporting
    match std::io::stdout().lock().write_all(out.as_bytes()) {
        Err(source) if source.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source }),
        _ => Ok(()),
    }
}

fn render(v: &serde_json::Value, depth: usize, out: &mut String) {
    use serde_json::Value;
    let pad = "  ".repeat(depth);
    match v {
        Value::Object(map) => {
            let width = map.keys().map(String::len).max().unwrap_or(0);
            for (k, val) in map {
                match val {
                    Value::Object(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render(val, depth + 1, out);
                    }
                    Value::Array(items) if items.iter().any(|i| i.is_object() || i.is_array()) => {
                        out.push_str(&format!("{pad}{k}: ({} items)\n", items.len()));
                        for item in items {
                            out.push_str(&format!("{pad}  -\n"));
                            render(item, depth + 2, out);
                        }
                    }
                    _ => out.push_str(&format!("{pad}{k:<width$}  {}\n", scalar(val))),
                }
            }
        }
        other => out.push_str(&format!("{pad}{}\n", scalar(other))),
    }
}

fn scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Number(n) => match n.as_f64() {
            Some(f) if !n.is_i64() && !n.is_u64() => format!("{f:.6}"),
            _ => n.to_string(),
        },
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(", "),
        other => other.to_string(),
    }
}

#[derive(Serialize)]
struct SynthOutput<'a> {
    path: &'a Path,
    stats: bagstack::corpus::DatasetStats,
}

#[derive(Serialize)]
struct AugmentOutput {
    samples: Vec<bagstack::augment::SampleManifest>,
}

#[derive(Serialize)]
struct SweepOutput {
    csv: Option<PathBuf>,
    rows: Vec<bagstack::ensemble::SweepRow>,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    let pretty = cli.pretty;
    match &cli.command {
        Command::Stats(a) => {
            apply_data(&mut cfg, a);
            cfg.validate()?;
            let path = cfg
                .dataset
                .clone()
                .ok_or_else(|| Error::Invalid("stats needs --dataset".into()))?;
            let d = load_dataset(&path, cfg.label_space()?)?;
            emit(&compute_stats(&d)?, pretty)
        }
        Command::Synth(a) => {
            let d = synth(a.n_docs, a.imbalance, cfg.seed)?;
            d.save(&a.out)?;
            emit(
                &SynthOutput {
                    path: &a.out,
                    stats: compute_stats(&d)?,
                },
                pretty,
            )
        }
        Command::Augment(a) => {
            apply_augment(&mut cfg, a);
            emit(
                &AugmentOutput {
                    samples: pipeline::run_augment(&cfg)?,
                },
                pretty,
            )
        }
        Command::Train(a) => {
            apply_train(&mut cfg, a);
            let req = TrainRequest {
                families: a.families.clone().unwrap_or(FamilySelection::All),
                samples: a.samples,
                parallel: a.parallel,
            };
            emit(&pipeline::run_train(&cfg, &req)?, pretty)
        }
        Command::Ensemble(a) => {
            let ens = strategy_config(&cfg, &a.strategy)?;
            let store = SnapshotStore::open(&store_path(&cfg, &a.store))?;
            if let Some(range) = &a.sweep_k {
                let ks = pipeline::parse_k_range(range)?;
                let rows = pipeline::run_sweep(&store, &ens, ks, a.out.as_deref())?;
                return emit(
                    &SweepOutput {
                        csv: a.out.clone(),
                        rows,
                    },
                    pretty,
                );
            }
            let built = ens.build(&store)?;
            let out = a
                .out
                .clone()
                .unwrap_or_else(|| cfg.layout().ensemble_dir(built.selection.strategy.as_str()));
            emit(&pipeline::run_ensemble(&store, &ens, Some(&out))?, pretty)
        }
        Command::Distill(a) => {
            cfg.ensemble = strategy_config(&cfg, &a.strategy)?;
            if a.student_family.is_some() {
                cfg.distill.family = a.student_family.clone();
            }
            if a.student_sample.is_some() {
                cfg.distill.sample = a.student_sample.clone();
            }
            if a.student_epochs.is_some() {
                cfg.distill.epochs = a.student_epochs;
            }
            emit(&pipeline::run_distill(&cfg, &store_path(&cfg, &a.store))?, pretty)
        }
        Command::Evaluate(a) => {
            let path = store_path(&cfg, &a.store);
            if let Some(e) = &a.ensemble {
                let store = SnapshotStore::open(&path)?;
                return emit(&pipeline::evaluate_recorded(e, &store)?, pretty);
            }
            let predictions = a
                .predictions
                .as_ref()
                .ok_or_else(|| Error::Invalid("evaluate needs --predictions or --ensemble".into()))?;
            let store = if a.truth.is_none() {
                Some(SnapshotStore::open(&path)?)
            } else {
                None
            };
            let report = pipeline::evaluate_predictions(predictions, a.truth.as_deref(), store.as_ref(), a.threshold)?;
            emit(&report, pretty)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
