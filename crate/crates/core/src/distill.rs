//! Soft-label export from an ensemble and a linear student trained on it.
//!
//! The snapshot store only holds validation predictions, so soft labels for
//! training documents come from a transfer store: each member run is
//! replayed deterministically from its sample and config, and the replayed
//! parameters predict on the transfer documents.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::TrainingSample;
use crate::ensemble::{aggregate, EnsembleModel};
use crate::error::{Error, Result};
use crate::learner::{
    encode_sample, model_id, replay_params, EncodedRow, EpochSnapshot, IdfWeights, LinearModel, TrainConfig, Trainer,
    ValidationSet,
};
use crate::matrix::ProbMatrix;
use crate::metrics::{full_report, Conventions, MetricsReport};
use crate::store::{SnapshotStore, StoreManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelProvenance {
    pub teacher: EnsembleModel,
    /// SHA-256 of the document ids the targets cover, newline-joined.
    pub doc_digest: String,
    pub n_docs: usize,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelSet {
    pub labels: Vec<String>,
    pub targets: ProbMatrix,
    pub provenance: SoftLabelProvenance,
}

impl SoftLabelSet {
    pub fn doc_ids(&self) -> &[String] {
        self.targets.doc_ids()
    }

    pub fn save(&self, csv_path: &Path) -> Result<()> {
        crate::io::write_atomic(csv_path, &self.targets.to_csv(&self.labels)?)?;
        crate::io::write_json_pretty(&provenance_path(csv_path), &self.provenance)
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let bytes = std::fs::read(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let (labels, targets) = ProbMatrix::from_csv(&bytes, csv_path)?;
        let provenance: SoftLabelProvenance = crate::io::read_json(&provenance_path(csv_path))?;
        if provenance.labels != labels || provenance.n_docs != targets.n_docs() {
            return Err(Error::Invalid(format!(
                "{}: provenance does not match the soft-label matrix",
                csv_path.display()
            )));
        }
        if provenance.doc_digest != doc_digest(targets.doc_ids()) {
            return Err(Error::Invalid(format!(
                "{}: document ids differ from the recorded digest",
                csv_path.display()
            )));
        }
        Ok(SoftLabelSet {
            labels,
            targets,
            provenance,
        })
    }
}

/// `soft.csv` -> `soft.provenance.json`.
pub fn provenance_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("provenance.json")
}

fn doc_digest(ids: &[String]) -> String {
    crate::hash::sha256_hex(ids.join("\n").as_bytes())
}

/// Soft labels = the ensemble's mean probabilities over the documents of
/// `store`, unsharpened. Written to `out` when given.
pub fn export_soft_labels(e: &EnsembleModel, store: &SnapshotStore, out: Option<&Path>) -> Result<SoftLabelSet> {
    let targets = aggregate(e, store)?;
    let set = SoftLabelSet {
        labels: store.labels().to_vec(),
        provenance: SoftLabelProvenance {
            teacher: e.clone(),
            doc_digest: doc_digest(targets.doc_ids()),
            n_docs: targets.n_docs(),
            labels: store.labels().to_vec(),
        },
        targets,
    };
    if let Some(path) = out {
        set.save(path)?;
    }
    Ok(set)
}

/// Replays every model the ensemble draws on and records its member-epoch
/// predictions on `transfer`. The result can be passed to
/// [`export_soft_labels`] in place of the validation store.
pub fn transfer_store(
    e: &EnsembleModel,
    manifest: &StoreManifest,
    samples: &[TrainingSample],
    transfer: &ValidationSet,
) -> Result<SnapshotStore> {
    let base_cfg = manifest
        .train
        .as_ref()
        .ok_or_else(|| Error::Invalid("store manifest records no training config; cannot replay".into()))?;
    let mut wanted: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for m in &e.selection.members {
        wanted.entry(m.model_id.as_str()).or_default().push(m.epoch);
    }
    let by_model: HashMap<String, (&crate::learner::FeaturizerConfig, &TrainingSample)> = manifest
        .families
        .iter()
        .flat_map(|f| samples.iter().map(move |s| (model_id(&f.family_id, &s.sample_id), (f, s))))
        .collect();
    for s in samples {
        if let Some(r) = manifest.samples.iter().find(|r| r.sample_id == s.sample_id) {
            if r.digest != s.digest()? {
                return Err(Error::Invalid(format!(
                    "sample {} differs from the one the store was trained on",
                    s.sample_id
                )));
            }
        }
    }
    let conventions = Conventions::with_threshold(manifest.threshold);
    let runs: Vec<Vec<EpochSnapshot>> = wanted
        .par_iter()
        .map(|(&id, epochs)| {
            let (fcfg, sample) = by_model
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("no family/sample to replay model {id:?}")))?;
            let (idf, rows) = encode_sample(sample, fcfg);
            let cfg = base_cfg.for_model(id);
            let xs = transfer.features(fcfg, idf.as_ref());
            replay_params(&rows, sample.label_space.len(), &cfg, fcfg, idf.as_ref(), epochs)?
                .into_iter()
                .map(|(epoch, model)| {
                    let predictions = model.predict_features(&transfer.doc_ids, &xs)?;
                    let report = full_report(&predictions, &transfer.truth, &transfer.labels, &conventions)?;
                    Ok(EpochSnapshot {
                        model_id: id.to_string(),
                        family_id: fcfg.family_id.clone(),
                        sample_id: sample.sample_id.clone(),
                        epoch,
                        predictions,
                        report,
                        params: None,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut store = SnapshotStore::new(transfer.labels.clone(), transfer.truth.clone(), conventions)?;
    for snap in runs.into_iter().flatten() {
        store.insert(snap)?;
    }
    Ok(store)
}

/// Rows of `sample` with targets taken from `targets` by doc id.
pub fn encode_with_targets(
    sample: &TrainingSample,
    targets: &ProbMatrix,
    fcfg: &crate::learner::FeaturizerConfig,
) -> Result<(Option<IdfWeights>, Vec<EncodedRow>)> {
    if targets.n_labels() != sample.label_space.len() {
        return Err(Error::Shape(format!(
            "soft labels have {} columns, sample has {} labels",
            targets.n_labels(),
            sample.label_space.len()
        )));
    }
    let index: HashMap<&str, usize> = targets
        .doc_ids()
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let missing: Vec<&str> = sample
        .rows
        .iter()
        .filter(|r| !index.contains_key(r.doc_id.as_str()))
        .map(|r| r.doc_id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Invalid(format!(
            "soft labels do not cover {} sample documents: {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let (idf, mut rows) = encode_sample(sample, fcfg);
    for (row, src) in rows.iter_mut().zip(&sample.rows) {
        row.targets = targets.row(index[src.doc_id.as_str()]).to_vec();
    }
    Ok((idf, rows))
}

/// Trains a linear student against soft targets for `cfg.epochs` epochs and
/// reports it against the hard validation truth.
pub fn train_student(
    sample: &TrainingSample,
    soft: &SoftLabelSet,
    cfg: &TrainConfig,
    fcfg: &crate::learner::FeaturizerConfig,
    val: &ValidationSet,
    conventions: &Conventions,
) -> Result<(LinearModel, MetricsReport)> {
    if soft.labels != sample.label_space.names() {
        return Err(Error::Shape("soft-label and sample label spaces differ".into()));
    }
    let (idf, rows) = encode_with_targets(sample, &soft.targets, fcfg)?;
    let val_x = val.features(fcfg, idf.as_ref());
    let mut trainer = Trainer::new(cfg.clone(), fcfg.clone(), sample.label_space.len(), &rows)?.with_idf(idf);
    for _ in 0..cfg.epochs {
        trainer.run_epoch()?;
    }
    let model = trainer.model();
    let predictions = model.predict_features(&val.doc_ids, &val_x)?;
    let report = full_report(&predictions, &val.truth, &val.labels, conventions)?;
    Ok((model, report))
}
