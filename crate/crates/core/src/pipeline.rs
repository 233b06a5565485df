//! End-to-end stages over a working directory:
//!
//! ```text
//! <workdir>/split/{train,val}.jsonl
//! <workdir>/samples/<sample_id>.{jsonl,plan.json}
//! <workdir>/store/...
//! <workdir>/ensembles/<name>/{ensemble.json,report.json,predictions.csv}
//! <workdir>/distill/{soft_labels.csv,soft_labels.provenance.json,student.json,report.json}
//! ```
//!
//! Every stage seed is derived from the master seed and the stage name.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    build_samples, load_samples, AugmentAxes, AugmentPlan, FieldOrderVariant, Lexicons, MaskLexicon, MaskMode,
    SampleManifest, SynonymLexicon, TrainingSample, DEFAULT_MAX_TOKENS, DEFAULT_NOISE_RATE,
    DEFAULT_SUBSTITUTION_RATE,
};
use crate::corpus::{load_dataset, split, Dataset, LabelSpace};
use crate::distill::{export_soft_labels, train_student, transfer_store};
use crate::ensemble::{evaluate_ensemble, rebuild, sweep_csv, sweep_k, EnsembleConfig, EnsembleModel, SweepRow};
use crate::error::{Error, Result};
use crate::learner::{model_id, train_with, FeaturizerConfig, TrainConfig, TrainOptions, ValidationSet};
use crate::matrix::{BinaryMatrix, ProbMatrix};
use crate::metrics::{full_report, Conventions, MetricsReport};
use crate::rng::derive_seed_str;
use crate::store::{
    matrix_rel_path, write_snapshot, SampleRef, SnapshotEntry, SnapshotStore, StoreManifest, ValidationInfo,
    MANIFEST_FILE, STORE_FORMAT, TRUTH_FILE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSettings {
    /// Expand the field-order axis (title-first and keywords-highlighted).
    pub field_order: bool,
    pub mask: bool,
    pub perturb: bool,
    pub mask_mode: MaskMode,
    pub substitution_rate: f64,
    pub noise_rate: f64,
    pub max_tokens: usize,
    pub subsample_fraction: f64,
    /// Overrides `subsample_fraction`.
    pub subsample_target: Option<usize>,
}

impl Default for AugmentSettings {
    fn default() -> Self {
        AugmentSettings {
            field_order: true,
            mask: true,
            perturb: true,
            mask_mode: MaskMode::Mask,
            substitution_rate: DEFAULT_SUBSTITUTION_RATE,
            noise_rate: DEFAULT_NOISE_RATE,
            max_tokens: DEFAULT_MAX_TOKENS,
            subsample_fraction: 0.6,
            subsample_target: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub families: Vec<FeaturizerConfig>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            l2: t.l2,
            families: FeaturizerConfig::default_families(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillSettings {
    /// Student family; defaults to the family of the best snapshot.
    pub family: Option<String>,
    /// Sample the student trains on; defaults to the first sample.
    pub sample: Option<String>,
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub mask_lexicon: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub workdir: PathBuf,
    pub seed: u64,
    pub val_fraction: f64,
    pub augment: AugmentSettings,
    pub train: TrainSettings,
    pub ensemble: EnsembleConfig,
    pub distill: DistillSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            labels: None,
            mask_lexicon: None,
            synonyms: None,
            workdir: PathBuf::from("bagstack-run"),
            seed: 42,
            val_fraction: 0.2,
            augment: AugmentSettings::default(),
            train: TrainSettings::default(),
            ensemble: EnsembleConfig::default(),
            distill: DistillSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("run config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = crate::io::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
    }

    /// Checks that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        for (key, path) in [
            ("dataset", &self.dataset),
            ("labels", &self.labels),
            ("mask_lexicon", &self.mask_lexicon),
            ("synonyms", &self.synonyms),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Invalid(format!("{key}: {} does not exist", p.display())));
                }
            }
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Invalid(format!("val_fraction {} outside (0,1)", self.val_fraction)));
        }
        if !(self.augment.subsample_fraction > 0.0 && self.augment.subsample_fraction <= 1.0) {
            return Err(Error::Invalid(format!(
                "subsample_fraction {} outside (0,1]",
                self.augment.subsample_fraction
            )));
        }
        if self.train.families.is_empty() {
            return Err(Error::Invalid("no model families configured".into()));
        }
        let mut ids = BTreeSet::new();
        for f in &self.train.families {
            f.validate()?;
            if !ids.insert(&f.family_id) {
                return Err(Error::Invalid(format!("family {:?} configured twice", f.family_id)));
            }
        }
        self.train_config().validate()
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed_str(self.seed, stage)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            seed: self.stage_seed("train"),
            l2: self.train.l2,
        }
    }

    pub fn label_space(&self) -> Result<Arc<LabelSpace>> {
        Ok(Arc::new(match &self.labels {
            Some(p) => LabelSpace::from_file(p)?,
            None => LabelSpace::litcovid(),
        }))
    }

    pub fn lexicons(&self) -> Result<Lexicons> {
        Ok(Lexicons {
            mask: Some(match &self.mask_lexicon {
                Some(p) => MaskLexicon::from_file(p, self.augment.mask_mode)?,
                None => MaskLexicon::covid(self.augment.mask_mode),
            }),
            synonyms: Some(match &self.synonyms {
                Some(p) => SynonymLexicon::from_file(p)?,
                None => SynonymLexicon::bundled(),
            }),
            noise: None,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout {
            root: self.workdir.clone(),
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let path = self
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Invalid("no dataset given".into()))?;
        load_dataset(path, self.label_space()?)
    }
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn split_dir(&self) -> PathBuf {
        self.root.join("split")
    }
    pub fn train_split(&self) -> PathBuf {
        self.split_dir().join("train.jsonl")
    }
    pub fn val_split(&self) -> PathBuf {
        self.split_dir().join("val.jsonl")
    }
    pub fn samples_dir(&self) -> PathBuf {
        self.root.join("samples")
    }
    pub fn store_dir(&self) -> PathBuf {
        self.root.join("store")
    }
    pub fn ensemble_dir(&self, name: &str) -> PathBuf {
        self.root.join("ensembles").join(name)
    }
    pub fn distill_dir(&self) -> PathBuf {
        self.root.join("distill")
    }
}

/// Splits the dataset and writes both halves.
pub fn run_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let (train, val) = split(&cfg.dataset()?, cfg.val_fraction, cfg.stage_seed("split"))?;
    let layout = cfg.layout();
    train.save(layout.train_split())?;
    val.save(layout.val_split())?;
    Ok((train, val))
}

/// Reads a previously written split.
pub fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let layout = cfg.layout();
    let space = cfg.label_space()?;
    Ok((
        load_dataset(layout.train_split(), Arc::clone(&space))?,
        load_dataset(layout.val_split(), space)?,
    ))
}

pub fn base_plan(cfg: &RunConfig, n_train: usize) -> AugmentPlan {
    let a = &cfg.augment;
    let target = a
        .subsample_target
        .unwrap_or_else(|| ((a.subsample_fraction * n_train as f64).round() as usize).max(1));
    AugmentPlan {
        mask_mode: a.mask_mode,
        substitution_rate: a.substitution_rate,
        noise_rate: a.noise_rate,
        max_tokens: a.max_tokens,
        ..AugmentPlan::new(target, cfg.stage_seed("augment"))
    }
}

pub fn axes(cfg: &RunConfig) -> AugmentAxes {
    AugmentAxes {
        field_orders: if cfg.augment.field_order {
            FieldOrderVariant::ALL.to_vec()
        } else {
            vec![FieldOrderVariant::TitleFirst]
        },
        mask: cfg.augment.mask,
        perturb: cfg.augment.perturb,
    }
}

/// Splits, then builds and writes every training sample.
pub fn run_augment(cfg: &RunConfig) -> Result<Vec<SampleManifest>> {
    cfg.validate()?;
    let (train, _) = run_split(cfg)?;
    let samples = build_samples(&train, &base_plan(cfg, train.len()), &axes(cfg), &cfg.lexicons()?)?;
    let dir = cfg.layout().samples_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    samples.iter().map(|s| s.save(&dir)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FamilySelection {
    All,
    First(usize),
    Named(Vec<String>),
}

impl std::str::FromStr for FamilySelection {
    type Err = String;

    /// A count (`2`) or a comma-separated list of family ids.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Ok(n) = s.parse::<usize>() {
            return if n == 0 {
                Err("at least one family is needed".into())
            } else {
                Ok(FamilySelection::First(n))
            };
        }
        let names: Vec<String> = s.split(',').map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
        if names.is_empty() {
            return Err("empty family list".into());
        }
        Ok(FamilySelection::Named(names))
    }
}

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub families: FamilySelection,
    /// Use only the first `n` samples.
    pub samples: Option<usize>,
    /// Worker threads; 1 trains sequentially.
    pub parallel: usize,
}

impl Default for TrainRequest {
    fn default() -> Self {
        TrainRequest {
            families: FamilySelection::All,
            samples: None,
            parallel: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub store: PathBuf,
    pub trained: Vec<String>,
    pub skipped: Vec<String>,
    pub snapshots: usize,
    pub best: Option<BestSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestSnapshot {
    pub model_id: String,
    pub epoch: usize,
    pub hamming_loss: f64,
    pub macro_f1: f64,
}

fn select_families(all: &[FeaturizerConfig], sel: &FamilySelection) -> Result<Vec<FeaturizerConfig>> {
    match sel {
        FamilySelection::All => Ok(all.to_vec()),
        FamilySelection::First(n) => {
            if *n > all.len() {
                return Err(Error::Invalid(format!("{n} families requested, {} configured", all.len())));
            }
            Ok(all[..*n].to_vec())
        }
        FamilySelection::Named(names) => names
            .iter()
            .map(|n| {
                all.iter()
                    .find(|f| &f.family_id == n)
                    .cloned()
                    .ok_or_else(|| Error::Invalid(format!("unknown family {n:?}")))
            })
            .collect(),
    }
}

/// Samples on disk, building them first when the directory holds none.
pub fn ensure_samples(cfg: &RunConfig) -> Result<Vec<TrainingSample>> {
    let dir = cfg.layout().samples_dir();
    let present = std::fs::read_dir(&dir)
        .map(|mut it| it.any(|e| e.is_ok_and(|e| e.file_name().to_string_lossy().ends_with(".plan.json"))))
        .unwrap_or(false);
    if !present {
        run_augment(cfg)?;
    }
    load_samples(&dir)
}

/// Trains every selected (family, sample) pair and records each epoch's
/// validation predictions. Models whose matrices are all present are
/// skipped; a partially written model is retrained and only its missing
/// matrices are written.
pub fn run_train(cfg: &RunConfig, req: &TrainRequest) -> Result<TrainSummary> {
    cfg.validate()?;
    let mut samples = ensure_samples(cfg)?;
    if let Some(n) = req.samples {
        if n == 0 || n > samples.len() {
            return Err(Error::Invalid(format!("{n} samples requested, {} available", samples.len())));
        }
        samples.truncate(n);
    }
    let families = select_families(&cfg.train.families, &req.families)?;
    let (_, val_docs) = load_split(cfg)?;
    let val = ValidationSet::from_dataset(&val_docs, FieldOrderVariant::TitleFirst, cfg.augment.max_tokens)?;
    let train_cfg = cfg.train_config();
    let conventions = Conventions::with_threshold(cfg.ensemble.threshold.unwrap_or(crate::metrics::DEFAULT_THRESHOLD));
    let store_dir = cfg.layout().store_dir();

    let mut manifest = match crate::io::read_json::<StoreManifest>(&store_dir.join(MANIFEST_FILE)) {
        Ok(m) => {
            if m.train.as_ref() != Some(&train_cfg) || m.validation.doc_ids != val.doc_ids {
                return Err(Error::Invalid(format!(
                    "{} was built with a different training config or split; use a fresh workdir",
                    store_dir.display()
                )));
            }
            m
        }
        Err(_) => StoreManifest {
            format: STORE_FORMAT.to_string(),
            label_space: val.labels.clone(),
            validation: ValidationInfo {
                doc_ids: val.doc_ids.clone(),
                truth: TRUTH_FILE.to_string(),
                field_order: Some(FieldOrderVariant::TitleFirst),
                max_tokens: Some(cfg.augment.max_tokens),
            },
            threshold: conventions.threshold,
            families: Vec::new(),
            samples: Vec::new(),
            train: Some(train_cfg.clone()),
            snapshots: Vec::new(),
        },
    };
    crate::io::write_atomic(&store_dir.join(TRUTH_FILE), &val.truth.to_csv(&val.labels)?)?;

    let jobs: Vec<(&FeaturizerConfig, &TrainingSample)> =
        families.iter().flat_map(|f| samples.iter().map(move |s| (f, s))).collect();
    let complete = |id: &str| (1..=train_cfg.epochs).all(|e| store_dir.join(matrix_rel_path(id, e)).exists());
    let run_job = |(f, s): &(&FeaturizerConfig, &TrainingSample)| -> Result<Option<String>> {
        let id = model_id(&f.family_id, &s.sample_id);
        if complete(&id) {
            return Ok(None);
        }
        let opts = TrainOptions {
            keep_params: false,
            conventions,
        };
        let run = train_with(s, &val, &train_cfg.for_model(&id), f, opts)?;
        for snap in &run.snapshots {
            write_snapshot(&store_dir, snap, &val.labels, false)?;
        }
        Ok(Some(id))
    };
    let outcomes: Vec<Result<Option<String>>> = if req.parallel <= 1 {
        jobs.iter().map(run_job).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(req.parallel)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run_job).collect())
    };

    let mut trained = Vec::new();
    let mut skipped = Vec::new();
    for ((f, s), outcome) in jobs.iter().zip(outcomes) {
        match outcome? {
            Some(id) => trained.push(id),
            None => skipped.push(model_id(&f.family_id, &s.sample_id)),
        }
    }

    for f in &families {
        if !manifest.families.iter().any(|m| m.family_id == f.family_id) {
            manifest.families.push(f.clone());
        }
    }
    manifest.families.sort_by(|a, b| a.family_id.cmp(&b.family_id));
    for s in &samples {
        let digest = s.digest()?;
        match manifest.samples.iter().find(|r| r.sample_id == s.sample_id) {
            Some(r) if r.digest != digest => {
                return Err(Error::Invalid(format!(
                    "sample {} changed since the store was written",
                    s.sample_id
                )))
            }
            Some(_) => {}
            None => manifest.samples.push(SampleRef {
                sample_id: s.sample_id.clone(),
                digest,
            }),
        }
    }
    manifest.samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut entries: BTreeMap<(String, usize), SnapshotEntry> = manifest
        .snapshots
        .drain(..)
        .map(|e| ((e.model_id.clone(), e.epoch), e))
        .collect();
    for (f, s) in &jobs {
        let id = model_id(&f.family_id, &s.sample_id);
        for epoch in 1..=train_cfg.epochs {
            entries.insert(
                (id.clone(), epoch),
                SnapshotEntry {
                    model_id: id.clone(),
                    family_id: Some(f.family_id.clone()),
                    sample_id: Some(s.sample_id.clone()),
                    epoch,
                    matrix: matrix_rel_path(&id, epoch),
                },
            );
        }
    }
    manifest.snapshots = entries.into_values().collect();
    crate::io::write_json_pretty(&store_dir.join(MANIFEST_FILE), &manifest)?;

    let store = SnapshotStore::open(&store_dir)?;
    let best = crate::ensemble::best_snapshot(&store).ok().map(|s| BestSnapshot {
        model_id: s.model_id.clone(),
        epoch: s.epoch,
        hamming_loss: s.report.hamming_loss,
        macro_f1: s.report.macro_f1,
    });
    Ok(TrainSummary {
        store: store_dir,
        trained,
        skipped,
        snapshots: store.len(),
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleOutput {
    pub ensemble: EnsembleModel,
    pub report: MetricsReport,
}

/// Builds, evaluates and (when `out` is given) writes an ensemble.
pub fn run_ensemble(store: &SnapshotStore, ens: &EnsembleConfig, out: Option<&Path>) -> Result<EnsembleOutput> {
    let ensemble = ens.build(store)?;
    let report = evaluate_ensemble(&ensemble, store, store.truth())?;
    if let Some(dir) = out {
        let predictions = crate::ensemble::aggregate(&ensemble, store)?;
        crate::io::write_json_pretty(&dir.join("ensemble.json"), &ensemble)?;
        crate::io::write_json_pretty(&dir.join("report.json"), &report)?;
        crate::io::write_atomic(&dir.join("predictions.csv"), &predictions.to_csv(store.labels())?)?;
    }
    Ok(EnsembleOutput { ensemble, report })
}

/// `1..8`, `1..=8` or a single `k`.
pub fn parse_k_range(s: &str) -> Result<std::ops::RangeInclusive<usize>> {
    let bad = || Error::Invalid(format!("invalid k range {s:?}; expected e.g. 1..8"));
    let (lo, hi) = match s.split_once("..") {
        Some((lo, hi)) => (lo, hi.strip_prefix('=').unwrap_or(hi)),
        None => (s, s),
    };
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok(lo..=hi)
}

pub fn run_sweep(
    store: &SnapshotStore,
    ens: &EnsembleConfig,
    ks: std::ops::RangeInclusive<usize>,
    out: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let rows = sweep_k(store, ens, ks)?;
    if let Some(path) = out {
        crate::io::write_atomic(path, sweep_csv(&rows).as_bytes())?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistillOutput {
    pub soft_labels: PathBuf,
    pub family: String,
    pub sample: String,
    pub teacher_members: usize,
    /// Teacher ensemble on the validation set.
    pub teacher: MetricsReport,
    pub student: MetricsReport,
    /// Same family, sample and config trained on hard labels.
    pub hard_baseline: MetricsReport,
}

/// Exports the ensemble's soft labels on the training split and trains a
/// student on them, alongside a hard-label baseline.
pub fn run_distill(cfg: &RunConfig, store_dir: &Path) -> Result<DistillOutput> {
    let store = SnapshotStore::open(store_dir)?;
    let manifest = store
        .manifest()
        .cloned()
        .ok_or_else(|| Error::Invalid("store has no manifest".into()))?;
    let base = manifest
        .train
        .clone()
        .ok_or_else(|| Error::Invalid("store records no training config; it cannot be replayed".into()))?;
    let ens_cfg = EnsembleConfig {
        strategy: cfg.ensemble.strategy.clone().or(Some("meta-ensemble".into())),
        ..cfg.ensemble.clone()
    };
    let teacher = ens_cfg.build(&store)?;
    let teacher_report = evaluate_ensemble(&teacher, &store, store.truth())?;

    let samples = load_samples(&cfg.layout().samples_dir())?;
    let (train_docs, _) = load_split(cfg)?;
    let field_order = manifest.validation.field_order.unwrap_or(FieldOrderVariant::TitleFirst);
    let max_tokens = manifest.validation.max_tokens.unwrap_or(cfg.augment.max_tokens);
    let transfer = ValidationSet::from_dataset(&train_docs, field_order, max_tokens)?;
    let tstore = transfer_store(&teacher, &manifest, &samples, &transfer)?;

    let out_dir = cfg.layout().distill_dir();
    let soft_path = out_dir.join("soft_labels.csv");
    let soft = export_soft_labels(&teacher, &tstore, Some(&soft_path))?;

    let family_id = match &cfg.distill.family {
        Some(f) => f.clone(),
        None => crate::ensemble::best_snapshot(&store)?.family_id.clone(),
    };
    let fcfg = manifest
        .families
        .iter()
        .find(|f| f.family_id == family_id)
        .ok_or_else(|| Error::Invalid(format!("unknown family {family_id:?}")))?
        .clone();
    let sample = match &cfg.distill.sample {
        Some(id) => samples
            .iter()
            .find(|s| &s.sample_id == id)
            .ok_or_else(|| Error::Invalid(format!("unknown sample {id:?}")))?,
        None => &samples[0],
    };
    let student_cfg = TrainConfig {
        epochs: cfg.distill.epochs.unwrap_or(base.epochs),
        ..base.for_model(&format!("distill:{}:{}", family_id, sample.sample_id))
    };
    let (_, val_docs) = load_split(cfg)?;
    let val = ValidationSet::from_dataset(&val_docs, field_order, max_tokens)?;
    let conventions = *store.conventions();
    let (student, student_report) = train_student(sample, &soft, &student_cfg, &fcfg, &val, &conventions)?;
    let hard = train_with(
        sample,
        &val,
        &student_cfg,
        &fcfg,
        TrainOptions {
            keep_params: false,
            conventions,
        },
    )?;
    let hard_report = hard
        .snapshots
        .last()
        .map(|s| s.report.clone())
        .ok_or_else(|| Error::Invalid("baseline produced no snapshots".into()))?;

    student.save(&out_dir.join("student.json"))?;
    let output = DistillOutput {
        soft_labels: soft_path,
        family: family_id,
        sample: sample.sample_id.clone(),
        teacher_members: teacher.selection.len(),
        teacher: teacher_report,
        student: student_report,
        hard_baseline: hard_report,
    };
    crate::io::write_json_pretty(&out_dir.join("report.json"), &output)?;
    Ok(output)
}

/// Scores a prediction matrix against the store truth or a given truth file.
pub fn evaluate_predictions(
    predictions: &Path,
    truth: Option<&Path>,
    store: Option<&SnapshotStore>,
    threshold: Option<f64>,
) -> Result<MetricsReport> {
    let bytes = std::fs::read(predictions).map_err(|e| Error::io(predictions, e))?;
    let (labels, p) = ProbMatrix::from_csv(&bytes, predictions)?;
    let (truth_labels, truth) = match (truth, store) {
        (Some(path), _) => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            BinaryMatrix::from_csv(&bytes, path)?
        }
        (None, Some(s)) => (s.labels().to_vec(), s.truth().clone()),
        (None, None) => return Err(Error::Invalid("no truth: give a truth file or a store".into())),
    };
    if labels != truth_labels {
        return Err(Error::Shape("prediction and truth label columns differ".into()));
    }
    let conv = Conventions::with_threshold(
        threshold.unwrap_or(store.map_or(crate::metrics::DEFAULT_THRESHOLD, |s| s.conventions().threshold)),
    );
    let p = p.reindex(truth.doc_ids())?;
    full_report(&p, &truth, &labels, &conv)
}

/// Rebuilds a recorded ensemble against the store and scores it.
pub fn evaluate_recorded(ensemble_path: &Path, store: &SnapshotStore) -> Result<EnsembleOutput> {
    let recorded: EnsembleModel = crate::io::read_json(ensemble_path)?;
    let ensemble = rebuild(&recorded, store)?;
    let report = evaluate_ensemble(&ensemble, store, store.truth())?;
    Ok(EnsembleOutput { ensemble, report })
}
