//! Snapshot store: every epoch's validation predictions, indexed by
//! `(model_id, epoch)`, plus the shared validation truth.
//!
//! On disk:
//!
//! ```text
//! store/manifest.json
//! store/truth.csv
//! store/<model_id>/epoch_<N>/matrix.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::FieldOrderVariant;
use crate::error::{Error, Result};
use crate::learner::{EpochSnapshot, FeaturizerConfig, TrainConfig};
use crate::matrix::{BinaryMatrix, ProbMatrix};
use crate::metrics::{full_report, Conventions};

pub const STORE_FORMAT: &str = "bagstack-store/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.csv";

fn default_threshold() -> f64 {
    crate::metrics::DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationInfo {
    pub doc_ids: Vec<String>,
    /// Truth matrix path, relative to the manifest.
    pub truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_order: Option<FieldOrderVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub sample_id: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub model_id: String,
    #[serde(default)]
    pub family_id: Option<String>,
    #[serde(default)]
    pub sample_id: Option<String>,
    pub epoch: usize,
    /// Matrix path, relative to the manifest.
    pub matrix: String,
}

/// Describes a store. External runs (e.g. transformer fine-tuning) can be
/// imported by writing a manifest with only `label_space`, `validation` and
/// `snapshots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format: String,
    pub label_space: Vec<String>,
    pub validation: ValidationInfo,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FeaturizerConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<SampleRef>,
    /// Base training config; each run's seed is derived from `train.seed`
    /// and its model id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    pub snapshots: Vec<SnapshotEntry>,
}

impl StoreManifest {
    pub fn empty() -> Self {
        StoreManifest {
            format: STORE_FORMAT.to_string(),
            label_space: Vec::new(),
            validation: ValidationInfo {
                doc_ids: Vec::new(),
                truth: TRUTH_FILE.to_string(),
                field_order: None,
                max_tokens: None,
            },
            threshold: default_threshold(),
            families: Vec::new(),
            samples: Vec::new(),
            train: None,
            snapshots: Vec::new(),
        }
    }
}

pub fn matrix_rel_path(model_id: &str, epoch: usize) -> String {
    format!("{model_id}/epoch_{epoch}/matrix.csv")
}

/// In-memory store. All snapshots share the validation doc ids and label
/// order; reports are always recomputed from the matrices.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    labels: Vec<String>,
    truth: BinaryMatrix,
    conventions: Conventions,
    snapshots: BTreeMap<(String, usize), EpochSnapshot>,
    manifest: Option<StoreManifest>,
}

impl SnapshotStore {
    pub fn new(labels: Vec<String>, truth: BinaryMatrix, conventions: Conventions) -> Result<Self> {
        if labels.len() != truth.n_labels() {
            return Err(Error::Shape(format!(
                "{} labels for a truth matrix with {} columns",
                labels.len(),
                truth.n_labels()
            )));
        }
        Ok(SnapshotStore {
            labels,
            truth,
            conventions,
            snapshots: BTreeMap::new(),
            manifest: None,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn doc_ids(&self) -> &[String] {
        self.truth.doc_ids()
    }

    pub fn truth(&self) -> &BinaryMatrix {
        &self.truth
    }

    pub fn conventions(&self) -> &Conventions {
        &self.conventions
    }

    pub fn manifest(&self) -> Option<&StoreManifest> {
        self.manifest.as_ref()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Adds a snapshot, recomputing its report under the store conventions.
    pub fn insert(&mut self, mut snap: EpochSnapshot) -> Result<()> {
        if snap.predictions.doc_ids() != self.truth.doc_ids() {
            return Err(Error::Shape(format!(
                "snapshot {} epoch {} does not share the store's validation doc ids",
                snap.model_id, snap.epoch
            )));
        }
        if snap.epoch == 0 {
            return Err(Error::Invalid(format!("snapshot {} has epoch 0", snap.model_id)));
        }
        snap.report = full_report(&snap.predictions, &self.truth, &self.labels, &self.conventions)?;
        let key = (snap.model_id.clone(), snap.epoch);
        if self.snapshots.contains_key(&key) {
            return Err(Error::Invalid(format!(
                "duplicate snapshot {} epoch {}",
                key.0, key.1
            )));
        }
        self.snapshots.insert(key, snap);
        Ok(())
    }

    pub fn get(&self, model_id: &str, epoch: usize) -> Option<&EpochSnapshot> {
        self.snapshots.get(&(model_id.to_string(), epoch))
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpochSnapshot> {
        self.snapshots.values()
    }

    /// A model's snapshots in epoch order.
    pub fn snapshots_of<'a>(&'a self, model_id: &'a str) -> impl Iterator<Item = &'a EpochSnapshot> + 'a {
        self.snapshots
            .range((model_id.to_string(), 0)..=(model_id.to_string(), usize::MAX))
            .map(|(_, s)| s)
    }

    pub fn model_ids(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.snapshots.keys().map(|(m, _)| m).collect();
        set.into_iter().cloned().collect()
    }

    pub fn families(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.snapshots.values().map(|s| &s.family_id).collect();
        set.into_iter().cloned().collect()
    }

    /// Model ids of one family, one per sample.
    pub fn models_of_family(&self, family_id: &str) -> Vec<String> {
        let set: BTreeSet<&String> = self
            .snapshots
            .values()
            .filter(|s| s.family_id == family_id)
            .map(|s| &s.model_id)
            .collect();
        set.into_iter().cloned().collect()
    }

    /// Lowest validation Hamming loss of each model.
    pub fn best_losses(&self) -> BTreeMap<String, f64> {
        let mut best: BTreeMap<String, f64> = BTreeMap::new();
        for s in self.snapshots.values() {
            let e = best.entry(s.model_id.clone()).or_insert(f64::INFINITY);
            *e = e.min(s.report.hamming_loss);
        }
        best
    }

    /// Writes truth, every matrix and the manifest. Matrices already on disk
    /// are left untouched.
    pub fn save(&self, dir: &Path, mut manifest: StoreManifest) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        crate::io::write_atomic(&dir.join(TRUTH_FILE), &self.truth.to_csv(&self.labels)?)?;
        manifest.snapshots.clear();
        for snap in self.snapshots.values() {
            let rel = write_snapshot(dir, snap, &self.labels, false)?;
            manifest.snapshots.push(SnapshotEntry {
                model_id: snap.model_id.clone(),
                family_id: Some(snap.family_id.clone()),
                sample_id: Some(snap.sample_id.clone()),
                epoch: snap.epoch,
                matrix: rel,
            });
        }
        manifest.format = STORE_FORMAT.to_string();
        manifest.label_space = self.labels.clone();
        manifest.validation.doc_ids = self.doc_ids().to_vec();
        manifest.validation.truth = TRUTH_FILE.to_string();
        manifest.threshold = self.conventions.threshold;
        crate::io::write_json_pretty(&dir.join(MANIFEST_FILE), &manifest)
    }

    /// Opens a store from a directory or a manifest path.
    pub fn open(path: &Path) -> Result<Self> {
        let manifest_path = resolve_manifest(path);
        let manifest: StoreManifest = crate::io::read_json(&manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let truth_path = base.join(&manifest.validation.truth);
        let bytes = std::fs::read(&truth_path).map_err(|e| Error::io(&truth_path, e))?;
        let (labels, truth) = BinaryMatrix::from_csv(&bytes, &truth_path)?;
        if labels != manifest.label_space {
            return Err(Error::Invalid(format!(
                "{}: label columns differ from the manifest label space",
                truth_path.display()
            )));
        }
        if truth.doc_ids() != manifest.validation.doc_ids.as_slice() {
            return Err(Error::Invalid(format!(
                "{}: doc ids differ from the manifest validation doc ids",
                truth_path.display()
            )));
        }
        let mut store = SnapshotStore::new(labels, truth, Conventions::with_threshold(manifest.threshold))?;
        for entry in &manifest.snapshots {
            let path = base.join(&entry.matrix);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let (cols, predictions) = ProbMatrix::from_csv(&bytes, &path)?;
            if cols != store.labels {
                return Err(Error::Invalid(format!(
                    "{}: label columns differ from the manifest label space",
                    path.display()
                )));
            }
            if predictions.doc_ids() != store.doc_ids() {
                return Err(Error::Invalid(format!(
                    "{}: document order differs from the validation doc ids",
                    path.display()
                )));
            }
            let family_id = entry.family_id.clone().unwrap_or_else(|| {
                entry
                    .model_id
                    .split_once("__")
                    .map_or(entry.model_id.clone(), |(f, _)| f.to_string())
            });
            let sample_id = entry.sample_id.clone().unwrap_or_else(|| {
                entry
                    .model_id
                    .split_once("__")
                    .map_or(entry.model_id.clone(), |(_, s)| s.to_string())
            });
            let report = full_report(&predictions, &store.truth, &store.labels, &store.conventions)?;
            store.insert(EpochSnapshot {
                model_id: entry.model_id.clone(),
                family_id,
                sample_id,
                epoch: entry.epoch,
                predictions,
                report,
                params: None,
            })?;
        }
        store.manifest = Some(manifest);
        Ok(store)
    }
}

fn resolve_manifest(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Writes one snapshot matrix under `dir`; returns its relative path. An
/// existing file is kept unless `overwrite`.
pub fn write_snapshot(dir: &Path, snap: &EpochSnapshot, labels: &[String], overwrite: bool) -> Result<String> {
    let rel = matrix_rel_path(&snap.model_id, snap.epoch);
    let path = dir.join(&rel);
    if overwrite || !path.exists() {
        crate::io::write_atomic(&path, &snap.predictions.to_csv(labels)?)?;
    }
    Ok(rel)
}

/// Loads every snapshot a manifest references. Reports are recomputed from
/// the matrices; any report stored alongside is ignored.
pub fn import_snapshots(manifest_path: &Path) -> Result<Vec<EpochSnapshot>> {
    Ok(SnapshotStore::open(manifest_path)?.iter().cloned().collect())
}
