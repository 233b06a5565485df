//! Multilabel metrics: Hamming loss, example-based F1, label-based
//! micro/macro F1 and binary cross-entropy.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{BinaryMatrix, ProbMatrix};
use crate::numeric::{compensated_mean, CompensatedSum};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Probabilities are clipped to `[EPS, 1 - EPS]` inside cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Conventions that change metric values; recorded in every report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub threshold: f64,
    /// Score of a document whose true and predicted label sets are both empty.
    pub empty_instance_f1: f64,
    /// Per-label F1 when TP = FP = FN = 0.
    pub zero_division_f1: f64,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            threshold: DEFAULT_THRESHOLD,
            empty_instance_f1: 1.0,
            zero_division_f1: 0.0,
        }
    }
}

impl Conventions {
    pub fn with_threshold(threshold: f64) -> Self {
        Conventions {
            threshold,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub hamming_loss: f64,
    pub instance_f1: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub bce: f64,
    pub per_label_f1: IndexMap<String, f64>,
    pub conventions: Conventions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Micro,
    Macro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelF1 {
    pub value: f64,
    pub per_label: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn f1(&self, zero_division: f64) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            zero_division
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

fn check_pair(pred_ids: &[String], pred_labels: usize, truth: &BinaryMatrix) -> Result<()> {
    if pred_labels != truth.n_labels() || pred_ids.len() != truth.n_docs() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred_ids.len(),
            pred_labels,
            truth.n_docs(),
            truth.n_labels()
        )));
    }
    if let Some(i) = (0..pred_ids.len()).find(|&i| pred_ids[i] != truth.doc_ids()[i]) {
        return Err(Error::Shape(format!(
            "row {i}: prediction document {:?} vs truth document {:?}",
            pred_ids[i],
            truth.doc_ids()[i]
        )));
    }
    Ok(())
}

/// Cell is 1 iff probability >= threshold.
pub fn binarize(p: &ProbMatrix, threshold: f64) -> Result<BinaryMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} outside (0,1)")));
    }
    BinaryMatrix::new(
        p.doc_ids().to_vec(),
        p.n_labels(),
        p.values().iter().map(|&v| (v >= threshold) as u8).collect(),
    )
}

/// Fraction of mismatched cells.
pub fn hamming_loss(pred: &BinaryMatrix, truth: &BinaryMatrix) -> Result<f64> {
    check_pair(pred.doc_ids(), pred.n_labels(), truth)?;
    let cells = pred.values().len();
    if cells == 0 {
        return Err(Error::Shape("empty matrices".into()));
    }
    let wrong = pred
        .values()
        .iter()
        .zip(truth.values())
        .filter(|(a, b)| a != b)
        .count();
    Ok(wrong as f64 / cells as f64)
}

pub fn instance_f1(pred: &BinaryMatrix, truth: &BinaryMatrix) -> Result<f64> {
    instance_f1_with(pred, truth, Conventions::default().empty_instance_f1)
}

/// Mean over documents of `2|Y ∩ Ŷ| / (|Y| + |Ŷ|)`.
pub fn instance_f1_with(pred: &BinaryMatrix, truth: &BinaryMatrix, empty_value: f64) -> Result<f64> {
    check_pair(pred.doc_ids(), pred.n_labels(), truth)?;
    compensated_mean((0..pred.n_docs()).map(|i| {
        let (p, t) = (pred.row(i), truth.row(i));
        let inter = p.iter().zip(t).filter(|(&a, &b)| a == 1 && b == 1).count();
        let size = p.iter().chain(t).filter(|&&v| v == 1).count();
        if size == 0 {
            empty_value
        } else {
            (2 * inter) as f64 / size as f64
        }
    }))
    .ok_or_else(|| Error::Shape("empty matrices".into()))
}

/// Per-label confusion counts.
pub fn confusion(pred: &BinaryMatrix, truth: &BinaryMatrix) -> Result<Vec<Confusion>> {
    check_pair(pred.doc_ids(), pred.n_labels(), truth)?;
    let n = pred.n_labels();
    let mut out = vec![Confusion::default(); n];
    for (k, (&p, &t)) in pred.values().iter().zip(truth.values()).enumerate() {
        let c = &mut out[k % n];
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => {}
        }
    }
    Ok(out)
}

pub fn label_f1(pred: &BinaryMatrix, truth: &BinaryMatrix, averaging: Averaging) -> Result<LabelF1> {
    label_f1_with(pred, truth, averaging, Conventions::default().zero_division_f1)
}

/// Micro: F1 of pooled counts. Macro: unweighted mean of per-label F1.
pub fn label_f1_with(
    pred: &BinaryMatrix,
    truth: &BinaryMatrix,
    averaging: Averaging,
    zero_division: f64,
) -> Result<LabelF1> {
    let counts = confusion(pred, truth)?;
    let per_label: Vec<f64> = counts.iter().map(|c| c.f1(zero_division)).collect();
    let value = match averaging {
        Averaging::Micro => {
            let pooled = counts.iter().fold(Confusion::default(), |acc, c| Confusion {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
            });
            pooled.f1(zero_division)
        }
        Averaging::Macro => compensated_mean(per_label.iter().copied())
            .ok_or_else(|| Error::Shape("no labels".into()))?,
    };
    Ok(LabelF1 { value, per_label })
}

/// Mean binary cross-entropy over cells; targets may be soft.
pub fn bce_targets(p: &ProbMatrix, targets: &[f64]) -> Result<f64> {
    if targets.len() != p.values().len() || targets.is_empty() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} targets",
            p.values().len(),
            targets.len()
        )));
    }
    let mut acc = CompensatedSum::new();
    for (&q, &y) in p.values().iter().zip(targets) {
        acc.add(cell_bce(q, y));
    }
    Ok(acc.value() / targets.len() as f64)
}

/// Cross-entropy of a single cell with clipping.
pub fn cell_bce(p: f64, y: f64) -> f64 {
    let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let mut loss = 0.0;
    if y != 0.0 {
        loss -= y * q.ln();
    }
    if y != 1.0 {
        loss -= (1.0 - y) * (1.0 - q).ln();
    }
    loss
}

pub fn bce(p: &ProbMatrix, truth: &BinaryMatrix) -> Result<f64> {
    check_pair(p.doc_ids(), p.n_labels(), truth)?;
    let targets: Vec<f64> = truth.values().iter().map(|&v| v as f64).collect();
    bce_targets(p, &targets)
}

/// All metrics from one binarization pass.
pub fn full_report(
    p: &ProbMatrix,
    truth: &BinaryMatrix,
    labels: &[String],
    conventions: &Conventions,
) -> Result<MetricsReport> {
    if labels.len() != p.n_labels() {
        return Err(Error::Shape(format!(
            "{} label names for {} columns",
            labels.len(),
            p.n_labels()
        )));
    }
    let pred = binarize(p, conventions.threshold)?;
    let micro = label_f1_with(&pred, truth, Averaging::Micro, conventions.zero_division_f1)?;
    let macro_ = label_f1_with(&pred, truth, Averaging::Macro, conventions.zero_division_f1)?;
    Ok(MetricsReport {
        hamming_loss: hamming_loss(&pred, truth)?,
        instance_f1: instance_f1_with(&pred, truth, conventions.empty_instance_f1)?,
        macro_f1: macro_.value,
        micro_f1: micro.value,
        bce: bce(p, truth)?,
        per_label_f1: labels.iter().cloned().zip(macro_.per_label).collect(),
        conventions: *conventions,
    })
}
