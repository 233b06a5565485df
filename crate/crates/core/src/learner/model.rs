use std::path::Path;

use serde::{Deserialize, Serialize};

use super::featurize::{hash_counts, weigh, FeaturizerConfig, IdfWeights, SparseVector};
use crate::augment::TokenSequence;
use crate::error::{Error, Result};
use crate::matrix::ProbMatrix;
use crate::numeric::sigmoid;

/// Smallest and largest probabilities a stored matrix can hold: `sigmoid`
/// saturates to exactly 0 or 1 in f64 for large logits.
const PROB_FLOOR: f64 = f64::MIN_POSITIVE;
const PROB_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// One sigmoid output per label over hashed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub featurizer: FeaturizerConfig,
    pub n_labels: usize,
    /// Row-major `n_labels x hash_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idf: Option<IdfWeights>,
}

impl LinearModel {
    pub fn zeros(featurizer: FeaturizerConfig, n_labels: usize) -> Self {
        let dim = featurizer.hash_dim;
        LinearModel {
            featurizer,
            n_labels,
            weights: vec![0.0; n_labels * dim],
            bias: vec![0.0; n_labels],
            idf: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.featurizer.hash_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.n_labels * self.dim() || self.bias.len() != self.n_labels {
            return Err(Error::Shape(format!(
                "model arrays do not match {} labels x {} features",
                self.n_labels,
                self.dim()
            )));
        }
        if self.idf.as_ref().is_some_and(|w| w.weights.len() != self.dim()) {
            return Err(Error::Shape("IDF weights do not match the hash dimension".into()));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("model has non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn features(&self, seq: &TokenSequence) -> SparseVector {
        weigh(&hash_counts(seq, &self.featurizer), self.idf.as_ref())
    }

    pub fn logit(&self, x: &SparseVector, label: usize) -> f64 {
        let row = &self.weights[label * self.dim()..(label + 1) * self.dim()];
        let mut z = self.bias[label];
        for (j, v) in x.iter() {
            z += row[j] * v;
        }
        z
    }

    pub fn proba(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_labels)
            .map(|l| sigmoid(self.logit(x, l)).clamp(PROB_FLOOR, PROB_CEIL))
            .collect()
    }

    pub fn predict_features(&self, doc_ids: &[String], xs: &[SparseVector]) -> Result<ProbMatrix> {
        let values = xs.iter().flat_map(|x| self.proba(x)).collect();
        ProbMatrix::new(doc_ids.to_vec(), self.n_labels, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json_pretty(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: LinearModel = crate::io::read_json(path)?;
        m.validate()?;
        Ok(m)
    }
}

/// `sigmoid(W x + b)` for every document and label.
pub fn predict(m: &LinearModel, seqs: &[(String, TokenSequence)]) -> Result<ProbMatrix> {
    let ids: Vec<String> = seqs.iter().map(|(id, _)| id.clone()).collect();
    let xs: Vec<SparseVector> = seqs.iter().map(|(_, s)| m.features(s)).collect();
    m.predict_features(&ids, &xs)
}
