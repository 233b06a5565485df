use serde::{Deserialize, Serialize};

use super::featurize::{hash_counts, weigh, FeaturizerConfig, IdfWeights, NgramCounts, SparseVector};
use super::model::LinearModel;
use crate::augment::{serialize_fields, FieldOrderVariant, TokenSequence, TrainingSample};
use crate::corpus::{Dataset, LabelSpace};
use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, ProbMatrix};
use crate::metrics::{full_report, Conventions, MetricsReport};
use crate::numeric::{sigmoid, CompensatedSum};
use crate::rng::{derive_seed, CounterRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 40.0,
            batch_size: 16,
            seed: 0,
            l2: 1e-5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Invalid(format!("l2 {} must be non-negative", self.l2)));
        }
        Ok(())
    }
}

/// A featurized training row with per-label targets in [0, 1].
#[derive(Debug, Clone)]
pub struct EncodedRow {
    pub x: SparseVector,
    pub targets: Vec<f64>,
}

/// Validation documents serialized once and shared by every run.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub doc_ids: Vec<String>,
    pub sequences: Vec<TokenSequence>,
    pub truth: BinaryMatrix,
    pub labels: Vec<String>,
}

impl ValidationSet {
    pub fn from_dataset(d: &Dataset, variant: FieldOrderVariant, max_tokens: usize) -> Result<Self> {
        let doc_ids: Vec<String> = d.documents().iter().map(|doc| doc.id.clone()).collect();
        let sequences = d
            .documents()
            .iter()
            .map(|doc| serialize_fields(doc, variant, max_tokens))
            .collect();
        let truth = BinaryMatrix::new(
            doc_ids.clone(),
            d.label_space().len(),
            d.documents().iter().flat_map(|doc| doc.labels.bits().to_vec()).collect(),
        )?;
        Ok(ValidationSet {
            doc_ids,
            sequences,
            truth,
            labels: d.label_space().names().to_vec(),
        })
    }

    pub fn features(&self, cfg: &FeaturizerConfig, idf: Option<&IdfWeights>) -> Vec<SparseVector> {
        self.sequences.iter().map(|s| weigh(&hash_counts(s, cfg), idf)).collect()
    }
}

/// Mean over cells of `softplus(z) - y z`, i.e. unclipped cross-entropy in
/// logit space, plus `l2/2 * |W|^2`.
pub fn objective(model: &LinearModel, rows: &[EncodedRow], l2: f64) -> f64 {
    let mut acc = CompensatedSum::new();
    for row in rows {
        for (l, &y) in row.targets.iter().enumerate() {
            let z = model.logit(&row.x, l);
            acc.add(softplus(z) - y * z);
        }
    }
    let cells = (rows.len() * model.n_labels) as f64;
    let reg = 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>();
    acc.value() / cells + reg
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// d loss / d logit for one cell, already scaled by the number of cells.
fn residual(z: f64, y: f64, cells: f64) -> f64 {
    (sigmoid(z) - y) / cells
}

/// Dense gradient of [`objective`]: `(dW, db)`.
pub fn gradient(model: &LinearModel, rows: &[EncodedRow], l2: f64) -> (Vec<f64>, Vec<f64>) {
    let dim = model.dim();
    let cells = (rows.len() * model.n_labels) as f64;
    let mut gw: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut gb = vec![0.0; model.n_labels];
    for row in rows {
        for (l, &y) in row.targets.iter().enumerate() {
            let r = residual(model.logit(&row.x, l), y, cells);
            gb[l] += r;
            for (j, v) in row.x.iter() {
                gw[l * dim + j] += r * v;
            }
        }
    }
    (gw, gb)
}

/// Mini-batch SGD with lazily scaled weights: the true weights are
/// `scale * v`, so L2 decay costs O(1) per step instead of O(labels x dim).
pub struct Trainer<'a> {
    cfg: TrainConfig,
    rows: &'a [EncodedRow],
    featurizer: FeaturizerConfig,
    n_labels: usize,
    v: Vec<f64>,
    scale: f64,
    bias: Vec<f64>,
    idf: Option<IdfWeights>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, featurizer: FeaturizerConfig, n_labels: usize, rows: &'a [EncodedRow]) -> Result<Self> {
        cfg.validate()?;
        featurizer.validate()?;
        if rows.is_empty() {
            return Err(Error::Invalid("no training rows".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.targets.len() != n_labels || r.x.dim != featurizer.hash_dim) {
            return Err(Error::Shape(format!(
                "row with {} targets / dim {} for {n_labels} labels / dim {}",
                r.targets.len(),
                r.x.dim,
                featurizer.hash_dim
            )));
        }
        Ok(Trainer {
            v: vec![0.0; n_labels * featurizer.hash_dim],
            scale: 1.0,
            bias: vec![0.0; n_labels],
            cfg,
            rows,
            featurizer,
            n_labels,
            idf: None,
            epoch: 0,
        })
    }

    /// IDF weights the rows were encoded with; carried into [`Self::model`].
    pub fn with_idf(mut self, idf: Option<IdfWeights>) -> Self {
        self.idf = idf;
        self
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn logit(&self, x: &SparseVector, label: usize) -> f64 {
        let dim = self.featurizer.hash_dim;
        let row = &self.v[label * dim..(label + 1) * dim];
        let mut dot = 0.0;
        for (j, val) in x.iter() {
            dot += row[j] * val;
        }
        self.scale * dot + self.bias[label]
    }

    fn step(&mut self, batch: &[usize]) {
        let dim = self.featurizer.hash_dim;
        let lr = self.cfg.learning_rate;
        let cells = (batch.len() * self.n_labels) as f64;
        let residuals: Vec<f64> = batch
            .iter()
            .flat_map(|&i| {
                let row = &self.rows[i];
                (0..self.n_labels).map(move |l| (row, l))
            })
            .map(|(row, l)| residual(self.logit(&row.x, l), row.targets[l], cells))
            .collect();

        self.scale *= 1.0 - lr * self.cfg.l2;
        let inv_scale = lr / self.scale;
        for (b, &i) in batch.iter().enumerate() {
            let x = &self.rows[i].x;
            for l in 0..self.n_labels {
                let r = residuals[b * self.n_labels + l];
                if r == 0.0 {
                    continue;
                }
                self.bias[l] -= lr * r;
                let row = &mut self.v[l * dim..(l + 1) * dim];
                for (j, val) in x.iter() {
                    row[j] -= inv_scale * r * val;
                }
            }
        }
        if self.scale < 1e-6 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    /// Runs one pass over the rows in a seed-determined order; returns the
    /// mean cross-entropy over all training cells afterwards.
    pub fn run_epoch(&mut self) -> Result<f64> {
        self.epoch += 1;
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        CounterRng::new(derive_seed(self.cfg.seed, self.epoch as u64)).shuffle(&mut order);
        for batch in order.chunks(self.cfg.batch_size) {
            self.step(batch);
        }
        let loss = self.train_loss();
        if !loss.is_finite() || !self.scale.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite training loss after epoch {} (learning rate {} too high?)",
                self.epoch, self.cfg.learning_rate
            )));
        }
        Ok(loss)
    }

    pub fn train_loss(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        for row in self.rows {
            for (l, &y) in row.targets.iter().enumerate() {
                let z = self.logit(&row.x, l);
                acc.add(softplus(z) - y * z);
            }
        }
        acc.value() / (self.rows.len() * self.n_labels) as f64
    }

    pub fn model(&self) -> LinearModel {
        LinearModel {
            featurizer: self.featurizer.clone(),
            n_labels: self.n_labels,
            weights: self.v.iter().map(|w| w * self.scale).collect(),
            bias: self.bias.clone(),
            idf: self.idf.clone(),
        }
    }
}

impl TrainConfig {
    /// The config one model is trained with: the seed is derived from the
    /// base seed and the model id, so runs are independent of scheduling.
    pub fn for_model(&self, model_id: &str) -> TrainConfig {
        TrainConfig {
            seed: crate::rng::derive_seed_str(self.seed, model_id),
            ..self.clone()
        }
    }
}

pub fn model_id(family_id: &str, sample_id: &str) -> String {
    format!("{family_id}__{sample_id}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSnapshot {
    pub model_id: String,
    pub family_id: String,
    pub sample_id: String,
    pub epoch: usize,
    pub predictions: ProbMatrix,
    pub report: MetricsReport,
    pub params: Option<LinearModel>,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub snapshots: Vec<EpochSnapshot>,
    /// Mean training cross-entropy after each epoch.
    pub train_losses: Vec<f64>,
}

/// Options that do not change the numbers.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOptions {
    pub keep_params: bool,
    pub conventions: Conventions,
}

/// Featurizes a sample's rows, fitting IDF weights on them when the family
/// asks for it.
pub fn encode_sample(sample: &TrainingSample, fcfg: &FeaturizerConfig) -> (Option<IdfWeights>, Vec<EncodedRow>) {
    let counts: Vec<NgramCounts> = sample.rows.iter().map(|row| hash_counts(&row.tokens, fcfg)).collect();
    let idf = fcfg.idf.then(|| IdfWeights::fit(&counts, fcfg.hash_dim));
    let rows = counts
        .iter()
        .zip(&sample.rows)
        .map(|(c, row)| EncodedRow {
            x: weigh(c, idf.as_ref()),
            targets: row.labels.bits().iter().map(|&b| b as f64).collect(),
        })
        .collect();
    (idf, rows)
}

fn check_label_space(sample: &LabelSpace, val: &[String]) -> Result<()> {
    if sample.names() != val {
        return Err(Error::Shape("sample and validation label spaces differ".into()));
    }
    Ok(())
}

/// Trains one (family, sample) run and snapshots validation predictions
/// after every epoch.
pub fn train(
    sample: &TrainingSample,
    val: &ValidationSet,
    cfg: &TrainConfig,
    fcfg: &FeaturizerConfig,
) -> Result<TrainRun> {
    train_with(sample, val, cfg, fcfg, TrainOptions::default())
}

pub fn train_with(
    sample: &TrainingSample,
    val: &ValidationSet,
    cfg: &TrainConfig,
    fcfg: &FeaturizerConfig,
    opts: TrainOptions,
) -> Result<TrainRun> {
    check_label_space(&sample.label_space, &val.labels)?;
    let (idf, rows) = encode_sample(sample, fcfg);
    let val_x = val.features(fcfg, idf.as_ref());
    let mut trainer = Trainer::new(cfg.clone(), fcfg.clone(), sample.label_space.len(), &rows)?.with_idf(idf);
    let id = model_id(&fcfg.family_id, &sample.sample_id);
    let mut snapshots = Vec::with_capacity(cfg.epochs);
    let mut train_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        train_losses.push(trainer.run_epoch()?);
        let model = trainer.model();
        let predictions = model.predict_features(&val.doc_ids, &val_x)?;
        let report = full_report(&predictions, &val.truth, &val.labels, &opts.conventions)?;
        snapshots.push(EpochSnapshot {
            model_id: id.clone(),
            family_id: fcfg.family_id.clone(),
            sample_id: sample.sample_id.clone(),
            epoch: trainer.epoch(),
            predictions,
            report,
            params: opts.keep_params.then_some(model),
        });
    }
    Ok(TrainRun {
        snapshots,
        train_losses,
    })
}

/// Replays a run and returns the parameters after each requested epoch.
pub fn replay_params(
    rows: &[EncodedRow],
    n_labels: usize,
    cfg: &TrainConfig,
    fcfg: &FeaturizerConfig,
    idf: Option<&IdfWeights>,
    epochs: &[usize],
) -> Result<Vec<(usize, LinearModel)>> {
    let last = epochs.iter().copied().max().unwrap_or(0);
    let mut trainer = Trainer::new(cfg.clone(), fcfg.clone(), n_labels, rows)?.with_idf(idf.cloned());
    let mut out = Vec::new();
    for e in 1..=last {
        trainer.run_epoch()?;
        if epochs.contains(&e) {
            out.push((e, trainer.model()));
        }
    }
    Ok(out)
}
