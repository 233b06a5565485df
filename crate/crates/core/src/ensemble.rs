//! Snapshot selection by validation Hamming loss, epoch and sample bagging,
//! loss-weighted stacking across models, and mean aggregation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{EpochSnapshot, LinearModel, SparseVector, ValidationSet};
use crate::matrix::{BinaryMatrix, ProbMatrix};
use crate::metrics::{full_report, Conventions, MetricsReport};
use crate::numeric::CompensatedSum;
use crate::store::SnapshotStore;

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_N: usize = 3;
pub const DEFAULT_M: usize = 8;
pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 4;

/// Mapping used by [`adaptive_k`], recorded in provenance.
pub const ADAPTIVE_K_RULE: &str =
    "k = round_half_away(k_max - (k_max - k_min) * (loss - min_loss) / (max_loss - min_loss)); \
     all losses equal -> round_half_away((k_min + k_max) / 2)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub model_id: String,
    pub epoch: usize,
    pub hamming_loss: f64,
}

impl Member {
    fn of(s: &EpochSnapshot) -> Self {
        Member {
            model_id: s.model_id.clone(),
            epoch: s.epoch,
            hamming_loss: s.report.hamming_loss,
        }
    }

    /// Ascending loss, then earlier epoch, then model id.
    fn rank(a: &Member, b: &Member) -> Ordering {
        a.hamming_loss
            .total_cmp(&b.hamming_loss)
            .then(a.epoch.cmp(&b.epoch))
            .then_with(|| a.model_id.cmp(&b.model_id))
    }
}

/// Ordered, duplicate-free snapshot references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub strategy: String,
    pub members: Vec<Member>,
}

impl Selection {
    fn from_members(strategy: &str, mut members: Vec<Member>) -> Result<Self> {
        members.sort_by(Member::rank);
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert((m.model_id.as_str(), m.epoch)) {
                return Err(Error::Selection(format!(
                    "snapshot {} epoch {} selected twice",
                    m.model_id, m.epoch
                )));
            }
        }
        if members.is_empty() {
            return Err(Error::Selection("empty selection".into()));
        }
        Ok(Selection {
            strategy: strategy.to_string(),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `(model_id, epoch)` pairs, for set comparisons.
    pub fn keys(&self) -> BTreeSet<(String, usize)> {
        self.members.iter().map(|m| (m.model_id.clone(), m.epoch)).collect()
    }
}

/// The `k` lowest-Hamming snapshots of one model.
pub fn select_top_k(store: &SnapshotStore, model_id: &str, k: usize) -> Result<Selection> {
    let mut members: Vec<Member> = store.snapshots_of(model_id).map(Member::of).collect();
    if members.is_empty() {
        return Err(Error::Selection(format!("unknown model {model_id:?}")));
    }
    if k == 0 || k > members.len() {
        return Err(Error::Selection(format!(
            "k = {k} but model {model_id:?} has {} snapshots",
            members.len()
        )));
    }
    members.sort_by(Member::rank);
    members.truncate(k);
    Selection::from_members("bag-k", members)
}

fn family_models(store: &SnapshotStore, family_id: &str) -> Result<Vec<String>> {
    let models = store.models_of_family(family_id);
    if models.is_empty() {
        return Err(Error::Selection(format!("unknown family {family_id:?}")));
    }
    Ok(models)
}

/// Union over every sample of the family of its top-`n` epochs.
pub fn top_n_per_sample(store: &SnapshotStore, family_id: &str, n: usize) -> Result<Selection> {
    if n == 0 {
        return Err(Error::Selection("n must be at least 1".into()));
    }
    let mut members = Vec::new();
    for model in family_models(store, family_id)? {
        let available = store.snapshots_of(&model).count();
        if available < n {
            return Err(Error::Selection(format!(
                "sample model {model:?} has {available} snapshots, fewer than n = {n}"
            )));
        }
        members.extend(select_top_k(store, &model, n)?.members);
    }
    Selection::from_members("bag-samples", members)
}

/// The `m` best of the pooled per-sample top-`n` epochs.
pub fn best_m_of_pooled(store: &SnapshotStore, family_id: &str, n: usize, m: usize) -> Result<Selection> {
    if m == 0 {
        return Err(Error::Selection("m must be at least 1".into()));
    }
    let pooled = top_n_per_sample(store, family_id, n)?;
    if m > pooled.len() {
        return Err(Error::Selection(format!(
            "m = {m} exceeds the {} pooled candidates",
            pooled.len()
        )));
    }
    let mut members = pooled.members;
    members.truncate(m);
    Selection::from_members("bag-pooled", members)
}

/// Per-model `k` from each model's best loss: the best model gets `k_max`,
/// the worst `k_min`, linearly in between.
pub fn adaptive_k(best_losses: &BTreeMap<String, f64>, k_min: usize, k_max: usize) -> Result<BTreeMap<String, usize>> {
    if best_losses.is_empty() {
        return Err(Error::Invalid("adaptive k needs at least one model".into()));
    }
    if k_min == 0 || k_min > k_max {
        return Err(Error::Invalid(format!("invalid k range [{k_min}, {k_max}]")));
    }
    if let Some((m, l)) = best_losses.iter().find(|(_, l)| !l.is_finite()) {
        return Err(Error::Invalid(format!("model {m:?} has non-finite loss {l}")));
    }
    let lo = best_losses.values().copied().fold(f64::INFINITY, f64::min);
    let hi = best_losses.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let (kmin, kmax) = (k_min as f64, k_max as f64);
    Ok(best_losses
        .iter()
        .map(|(m, &loss)| {
            let k = if hi == lo {
                ((kmin + kmax) / 2.0).round()
            } else {
                (kmax - (kmax - kmin) * (loss - lo) / (hi - lo)).round()
            };
            (m.clone(), (k as usize).clamp(k_min, k_max))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    MeanProbability,
    /// Average the weights of homogeneous linear members, then predict.
    ParameterMean,
}

/// A fully resolved strategy; enough to rebuild the selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Strategy {
    BagK { model: String, k: usize },
    BagSamples { family: String, n: usize },
    BagPooled { family: String, n: usize, m: usize },
    MetaK { families: Vec<String>, k: usize },
    MetaAdaptive { families: Vec<String>, k_min: usize, k_max: usize },
    MetaEnsemble { k_min: usize, k_max: usize },
    /// Explicit per-model k.
    Meta { per_model_k: BTreeMap<String, usize> },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::BagK { .. } => "bag-k",
            Strategy::BagSamples { .. } => "bag-samples",
            Strategy::BagPooled { .. } => "bag-pooled",
            Strategy::MetaK { .. } => "meta-k",
            Strategy::MetaAdaptive { .. } => "meta-adaptive",
            Strategy::MetaEnsemble { .. } => "meta-ensemble",
            Strategy::Meta { .. } => "meta",
        }
    }
}

/// Identifies the store an ensemble was built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreFingerprint {
    pub n_docs: usize,
    pub labels: Vec<String>,
    pub n_snapshots: usize,
    /// SHA-256 over the validation doc ids and truth.
    pub validation_digest: String,
}

impl StoreFingerprint {
    pub fn of(store: &SnapshotStore) -> Result<Self> {
        let mut bytes = store.doc_ids().join("\n").into_bytes();
        bytes.extend(store.truth().to_csv(store.labels())?);
        Ok(StoreFingerprint {
            n_docs: store.doc_ids().len(),
            labels: store.labels().to_vec(),
            n_snapshots: store.len(),
            validation_digest: crate::hash::sha256_hex(&bytes),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Per-model k actually used by stacking strategies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_model_k: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive_rule: Option<String>,
    pub aggregation: Aggregation,
    pub threshold: f64,
    pub store: StoreFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub provenance: Provenance,
    pub selection: Selection,
}

/// Union over models of each model's top-k epochs.
pub fn build_meta(store: &SnapshotStore, per_model_k: &BTreeMap<String, usize>) -> Result<EnsembleModel> {
    build(
        store,
        &Strategy::Meta {
            per_model_k: per_model_k.clone(),
        },
        Aggregation::MeanProbability,
        store.conventions().threshold,
    )
}

fn meta_selection(store: &SnapshotStore, name: &str, per_model_k: &BTreeMap<String, usize>) -> Result<Selection> {
    if per_model_k.is_empty() {
        return Err(Error::Selection("stacking needs at least one model".into()));
    }
    let mut members = Vec::new();
    for (model, &k) in per_model_k {
        members.extend(select_top_k(store, model, k)?.members);
    }
    Selection::from_members(name, members)
}

fn models_of_families(store: &SnapshotStore, families: &[String]) -> Result<Vec<String>> {
    if families.is_empty() {
        return Err(Error::Selection("no families selected".into()));
    }
    let mut out = Vec::new();
    for f in families {
        out.extend(family_models(store, f)?);
    }
    Ok(out)
}

fn adaptive_for(store: &SnapshotStore, models: &[String], k_min: usize, k_max: usize) -> Result<BTreeMap<String, usize>> {
    let best = store.best_losses();
    let losses: BTreeMap<String, f64> = models.iter().map(|m| (m.clone(), best[m])).collect();
    adaptive_k(&losses, k_min, k_max)
}

/// Builds an ensemble for a resolved strategy.
pub fn build(store: &SnapshotStore, strategy: &Strategy, aggregation: Aggregation, threshold: f64) -> Result<EnsembleModel> {
    let (selection, per_model_k, rule) = match strategy {
        Strategy::BagK { model, k } => (select_top_k(store, model, *k)?, None, None),
        Strategy::BagSamples { family, n } => (top_n_per_sample(store, family, *n)?, None, None),
        Strategy::BagPooled { family, n, m } => (best_m_of_pooled(store, family, *n, *m)?, None, None),
        Strategy::MetaK { families, k } => {
            let ks: BTreeMap<String, usize> =
                models_of_families(store, families)?.into_iter().map(|m| (m, *k)).collect();
            (meta_selection(store, strategy.name(), &ks)?, Some(ks), None)
        }
        Strategy::MetaAdaptive { families, k_min, k_max } => {
            let ks = adaptive_for(store, &models_of_families(store, families)?, *k_min, *k_max)?;
            (meta_selection(store, strategy.name(), &ks)?, Some(ks), Some(ADAPTIVE_K_RULE.to_string()))
        }
        Strategy::MetaEnsemble { k_min, k_max } => {
            let ks = adaptive_for(store, &store.model_ids(), *k_min, *k_max)?;
            (meta_selection(store, strategy.name(), &ks)?, Some(ks), Some(ADAPTIVE_K_RULE.to_string()))
        }
        Strategy::Meta { per_model_k } => (
            meta_selection(store, strategy.name(), per_model_k)?,
            Some(per_model_k.clone()),
            None,
        ),
    };
    let selection = Selection {
        strategy: strategy.name().to_string(),
        ..selection
    };
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} outside (0,1)")));
    }
    Ok(EnsembleModel {
        provenance: Provenance {
            strategy: strategy.clone(),
            per_model_k,
            adaptive_rule: rule,
            aggregation,
            threshold,
            store: StoreFingerprint::of(store)?,
        },
        selection,
    })
}

/// Rebuilds an ensemble from its provenance and checks that the store and
/// the selection are unchanged.
pub fn rebuild(recorded: &EnsembleModel, store: &SnapshotStore) -> Result<EnsembleModel> {
    let fp = StoreFingerprint::of(store)?;
    if fp.validation_digest != recorded.provenance.store.validation_digest || fp.labels != recorded.provenance.store.labels {
        return Err(Error::Invalid("ensemble was built against a different validation set".into()));
    }
    let p = &recorded.provenance;
    let rebuilt = build(store, &p.strategy, p.aggregation, p.threshold)?;
    if rebuilt.selection.keys() != recorded.selection.keys() {
        return Err(Error::Selection("rebuilt selection differs from the recorded one".into()));
    }
    Ok(rebuilt)
}

fn member_snapshots<'a>(e: &EnsembleModel, store: &'a SnapshotStore) -> Result<Vec<&'a EpochSnapshot>> {
    e.selection
        .members
        .iter()
        .map(|m| {
            store.get(&m.model_id, m.epoch).ok_or_else(|| {
                Error::Selection(format!("snapshot {} epoch {} not in store", m.model_id, m.epoch))
            })
        })
        .collect()
}

/// Cellwise unweighted mean of member matrices.
///
/// Each cell's values are summed in sorted order with compensation, so the
/// result does not depend on member order, and clamped to the members'
/// range to absorb rounding.
pub fn mean_matrices(members: &[&ProbMatrix]) -> Result<ProbMatrix> {
    let first = members
        .first()
        .ok_or_else(|| Error::Selection("nothing to aggregate".into()))?;
    for m in members {
        if m.doc_ids() != first.doc_ids() || m.n_labels() != first.n_labels() {
            return Err(Error::Shape("member matrices do not share doc ids and labels".into()));
        }
    }
    let count = members.len() as f64;
    let mut cell = Vec::with_capacity(members.len());
    let values = (0..first.values().len())
        .map(|i| {
            cell.clear();
            cell.extend(members.iter().map(|m| m.values()[i]));
            cell.sort_by(f64::total_cmp);
            let mut acc = CompensatedSum::new();
            cell.iter().for_each(|&v| acc.add(v));
            (acc.value() / count).clamp(cell[0], cell[cell.len() - 1])
        })
        .collect();
    ProbMatrix::new(first.doc_ids().to_vec(), first.n_labels(), values)
}

/// Mean of the members' validation predictions.
pub fn aggregate(e: &EnsembleModel, store: &SnapshotStore) -> Result<ProbMatrix> {
    if e.provenance.aggregation == Aggregation::ParameterMean {
        return Err(Error::Invalid(
            "parameter-mean ensembles need inputs; use aggregate_parameter_mean".into(),
        ));
    }
    let snaps = member_snapshots(e, store)?;
    let mats: Vec<&ProbMatrix> = snaps.iter().map(|s| &s.predictions).collect();
    mean_matrices(&mats)
}

/// Elementwise mean of weights and biases of homogeneous linear members.
pub fn average_parameters(selection: &Selection, store: &SnapshotStore) -> Result<LinearModel> {
    let models: Vec<&LinearModel> = selection
        .members
        .iter()
        .map(|m| {
            store
                .get(&m.model_id, m.epoch)
                .and_then(|s| s.params.as_ref())
                .ok_or_else(|| {
                    Error::Selection(format!(
                        "snapshot {} epoch {} carries no parameters",
                        m.model_id, m.epoch
                    ))
                })
        })
        .collect::<Result<_>>()?;
    average_models(&models)
}

pub fn average_models(models: &[&LinearModel]) -> Result<LinearModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::Selection("nothing to average".into()))?;
    if let Some(other) = models
        .iter()
        .find(|m| m.featurizer != first.featurizer || m.n_labels != first.n_labels || m.idf != first.idf)
    {
        return Err(Error::Selection(format!(
            "cannot average heterogeneous members ({:?} vs {:?})",
            first.featurizer.family_id, other.featurizer.family_id
        )));
    }
    let n = models.len() as f64;
    let mean = |get: &dyn Fn(&LinearModel) -> &[f64]| -> Vec<f64> {
        (0..get(first).len())
            .map(|i| {
                let mut acc = CompensatedSum::new();
                models.iter().for_each(|m| acc.add(get(m)[i]));
                acc.value() / n
            })
            .collect()
    };
    Ok(LinearModel {
        featurizer: first.featurizer.clone(),
        n_labels: first.n_labels,
        weights: mean(&|m| &m.weights),
        bias: mean(&|m| &m.bias),
        idf: first.idf.clone(),
    })
}

/// Predictions of the parameter-averaged members on the validation inputs.
pub fn aggregate_parameter_mean(e: &EnsembleModel, store: &SnapshotStore, val: &ValidationSet) -> Result<ProbMatrix> {
    let model = average_parameters(&e.selection, store)?;
    let xs: Vec<SparseVector> = val.features(&model.featurizer, model.idf.as_ref());
    model.predict_features(&val.doc_ids, &xs)
}

/// `full_report(aggregate(e), truth)` at the ensemble's threshold.
pub fn evaluate_ensemble(e: &EnsembleModel, store: &SnapshotStore, truth: &BinaryMatrix) -> Result<MetricsReport> {
    let p = aggregate(e, store)?;
    let conv = Conventions {
        threshold: e.provenance.threshold,
        ..*store.conventions()
    };
    full_report(&p, truth, store.labels(), &conv)
}

/// Unresolved strategy parameters, as read from a config file or flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub strategy: Option<String>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub families: Option<Vec<String>>,
    pub family: Option<String>,
    pub model: Option<String>,
    pub threshold: Option<f64>,
    pub aggregation: Option<Aggregation>,
}

pub const STRATEGY_NAMES: [&str; 6] = [
    "bag-k",
    "bag-samples",
    "bag-pooled",
    "meta-k",
    "meta-adaptive",
    "meta-ensemble",
];

impl EnsembleConfig {
    /// Parses the TOML key = value form.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Invalid(format!("ensemble config: {e}")))
    }

    /// Fills later values over earlier ones.
    pub fn merged(self, over: EnsembleConfig) -> Self {
        EnsembleConfig {
            strategy: over.strategy.or(self.strategy),
            k: over.k.or(self.k),
            n: over.n.or(self.n),
            m: over.m.or(self.m),
            k_min: over.k_min.or(self.k_min),
            k_max: over.k_max.or(self.k_max),
            families: over.families.or(self.families),
            family: over.family.or(self.family),
            model: over.model.or(self.model),
            threshold: over.threshold.or(self.threshold),
            aggregation: over.aggregation.or(self.aggregation),
        }
    }

    /// Resolves defaults against a store. Without an explicit model or
    /// family, the bagging strategies use the model (family) holding the
    /// single lowest-Hamming snapshot.
    pub fn resolve(&self, store: &SnapshotStore) -> Result<Strategy> {
        let name = self.strategy.as_deref().unwrap_or("meta-ensemble");
        let best = best_snapshot(store)?;
        let family = || self.family.clone().unwrap_or_else(|| best.family_id.clone());
        let families = || self.families.clone().unwrap_or_else(|| store.families());
        let k_min = self.k_min.unwrap_or(DEFAULT_K_MIN);
        let k_max = self.k_max.unwrap_or(DEFAULT_K_MAX);
        Ok(match name {
            "bag-k" => Strategy::BagK {
                model: self.model.clone().unwrap_or_else(|| best.model_id.clone()),
                k: self.k.unwrap_or(DEFAULT_K),
            },
            "bag-samples" => Strategy::BagSamples {
                family: family(),
                n: self.n.unwrap_or(DEFAULT_N),
            },
            "bag-pooled" => Strategy::BagPooled {
                family: family(),
                n: self.n.unwrap_or(DEFAULT_N),
                m: self.m.unwrap_or(DEFAULT_M),
            },
            "meta-k" => Strategy::MetaK {
                families: families(),
                k: self.k.unwrap_or(DEFAULT_K),
            },
            "meta-adaptive" => Strategy::MetaAdaptive {
                families: families(),
                k_min,
                k_max,
            },
            "meta-ensemble" => Strategy::MetaEnsemble { k_min, k_max },
            other => {
                return Err(Error::Invalid(format!(
                    "unknown strategy {other:?}; expected one of {}",
                    STRATEGY_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn build(&self, store: &SnapshotStore) -> Result<EnsembleModel> {
        let strategy = self.resolve(store)?;
        build(
            store,
            &strategy,
            self.aggregation.unwrap_or_default(),
            self.threshold.unwrap_or(store.conventions().threshold),
        )
    }
}

/// Lowest-Hamming snapshot in the store, same tie-break as selections.
pub fn best_snapshot(store: &SnapshotStore) -> Result<&EpochSnapshot> {
    store
        .iter()
        .min_by(|a, b| Member::rank(&Member::of(a), &Member::of(b)))
        .ok_or_else(|| Error::Selection("store is empty".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub strategy: String,
    pub k: usize,
    pub members: usize,
    pub report: MetricsReport,
}

/// Metric-versus-k curves: epoch bagging of the best model (`bag-k`),
/// per-sample top-k bagging of its family (`bag-samples`) and fixed-k
/// stacking over all families (`meta-k`).
pub fn sweep_k(store: &SnapshotStore, base: &EnsembleConfig, ks: std::ops::RangeInclusive<usize>) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for name in ["bag-k", "bag-samples", "meta-k"] {
        for k in ks.clone() {
            let cfg = EnsembleConfig {
                strategy: Some(name.to_string()),
                k: Some(k),
                n: Some(k),
                ..base.clone()
            };
            let e = cfg.build(store)?;
            rows.push(SweepRow {
                strategy: name.to_string(),
                k,
                members: e.selection.len(),
                report: evaluate_ensemble(&e, store, store.truth())?,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    use crate::numeric::format_f64;
    let mut out = String::from("strategy,k,members,hamming_loss,instance_f1,macro_f1,micro_f1,bce\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.strategy,
            r.k,
            r.members,
            format_f64(r.report.hamming_loss),
            format_f64(r.report.instance_f1),
            format_f64(r.report.macro_f1),
            format_f64(r.report.micro_f1),
            format_f64(r.report.bce)
        ));
    }
    out
}
