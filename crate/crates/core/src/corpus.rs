//! Multilabel document collections: ingestion, statistics and splitting.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};

const DEFAULT_LABELS: &str = include_str!("../data/litcovid_labels.txt");

/// Ordered label names. The order fixes the column order of every matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::Invalid("label space is empty".into()));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::Invalid("label space contains an empty name".into()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate label {name:?}")));
            }
        }
        Ok(LabelSpace { names, index })
    }

    /// The seven LitCovid topics.
    pub fn litcovid() -> Self {
        Self::parse(DEFAULT_LABELS).expect("bundled label list is valid")
    }

    /// One label per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }
}

/// Binary membership vector over a [`LabelSpace`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet {
    bits: Vec<u8>,
}

impl LabelSet {
    pub fn empty(n_labels: usize) -> Self {
        LabelSet {
            bits: vec![0; n_labels],
        }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Invalid("label bits must be 0 or 1".into()));
        }
        Ok(LabelSet { bits })
    }

    /// Encodes label names; on failure returns the first unknown name.
    pub fn from_names<S: AsRef<str>>(space: &LabelSpace, names: &[S]) -> Result<Self, String> {
        let mut set = LabelSet::empty(space.len());
        for name in names {
            let name = name.as_ref();
            let i = space.index_of(name).ok_or_else(|| name.to_string())?;
            set.bits[i] = 1;
        }
        Ok(set)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.bits[label] == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn names<'a>(&self, space: &'a LabelSpace) -> Vec<&'a str> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| space.name(i))
            .collect()
    }

    /// Human-readable key of the exact label combination.
    pub fn group_name(&self, space: &LabelSpace) -> String {
        let names = self.names(space);
        if names.is_empty() {
            "<none>".to_string()
        } else {
            names.join("|")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub keywords: Vec<String>,
    pub abstract_text: String,
    pub labels: LabelSet,
}

/// Wire form of one JSONL line.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    title: String,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(rename = "abstract", default)]
    abstract_text: String,
    labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    label_space: Arc<LabelSpace>,
    documents: Vec<Document>,
}

impl Dataset {
    pub fn new(label_space: Arc<LabelSpace>, documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.title.trim().is_empty() {
                return Err(Error::Invalid(format!("document {:?} has an empty title", doc.id)));
            }
            if doc.labels.len() != label_space.len() {
                return Err(Error::Shape(format!(
                    "document {:?} has {} label bits, label space has {}",
                    doc.id,
                    doc.labels.len(),
                    label_space.len()
                )));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate document id {:?}", doc.id)));
            }
        }
        Ok(Dataset {
            label_space,
            documents,
        })
    }

    pub fn label_space(&self) -> &Arc<LabelSpace> {
        &self.label_space
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Sub-dataset with the documents at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            label_space: Arc::clone(&self.label_space),
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
        }
    }

    /// Index of each document's label group, groups numbered in order of
    /// first appearance.
    pub fn group_ids(&self) -> (Vec<usize>, Vec<usize>) {
        let mut ids: HashMap<&LabelSet, usize> = HashMap::new();
        let mut sizes = Vec::new();
        let assignment = self
            .documents
            .iter()
            .map(|d| {
                let next = ids.len();
                let g = *ids.entry(&d.labels).or_insert(next);
                if g == sizes.len() {
                    sizes.push(0);
                }
                sizes[g] += 1;
                g
            })
            .collect();
        (assignment, sizes)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for doc in &self.documents {
            let record = Record {
                id: doc.id.clone(),
                title: doc.title.clone(),
                keywords: doc.keywords.clone(),
                abstract_text: doc.abstract_text.clone(),
                labels: doc
                    .labels
                    .names(&self.label_space)
                    .into_iter()
                    .map(String::from)
                    .collect(),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")
                .map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }
}

/// Reads a JSONL dataset, preserving line order.
pub fn load_dataset(path: impl AsRef<Path>, label_space: Arc<LabelSpace>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), path, label_space)
}

pub fn read_dataset<R: BufRead>(
    reader: R,
    origin: &Path,
    label_space: Arc<LabelSpace>,
) -> Result<Dataset> {
    let mut documents = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| Error::parse(origin, lineno, format!("malformed record: {e}")))?;
        let labels = LabelSet::from_names(&label_space, &record.labels).map_err(|name| {
            Error::parse(origin, lineno, format!("unknown label {name:?}"))
        })?;
        if record.title.trim().is_empty() {
            return Err(Error::parse(origin, lineno, "empty title"));
        }
        if let Some(first) = seen.insert(record.id.clone(), lineno) {
            return Err(Error::parse(
                origin,
                lineno,
                format!("duplicate id {:?} (first seen on line {first})", record.id),
            ));
        }
        documents.push(Document {
            id: record.id,
            title: record.title,
            keywords: record.keywords,
            abstract_text: record.abstract_text,
            labels,
        });
    }
    Dataset::new(label_space, documents)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_documents: usize,
    pub per_label_counts: IndexMap<String, usize>,
    /// max count / min nonzero count.
    pub imbalance_ratio: f64,
    /// Labels with no positive document; excluded from the ratio.
    pub zero_positive_labels: Vec<String>,
    /// Exact label combination -> number of documents, most frequent first.
    pub label_group_histogram: IndexMap<String, usize>,
    pub singleton_group_count: usize,
}

pub fn compute_stats(d: &Dataset) -> Result<DatasetStats> {
    if d.is_empty() {
        return Err(Error::Invalid("dataset is empty".into()));
    }
    let space = d.label_space();
    let mut counts = vec![0usize; space.len()];
    let mut groups: BTreeMap<&LabelSet, usize> = BTreeMap::new();
    for doc in d.documents() {
        for (c, &b) in counts.iter_mut().zip(doc.labels.bits()) {
            *c += b as usize;
        }
        *groups.entry(&doc.labels).or_default() += 1;
    }

    let nonzero: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    let imbalance_ratio = match (nonzero.iter().max(), nonzero.iter().min()) {
        (Some(&max), Some(&min)) => max as f64 / min as f64,
        _ => return Err(Error::Invalid("no label has a positive document".into())),
    };

    let mut histogram: Vec<(String, usize)> = groups
        .iter()
        .map(|(set, &n)| (set.group_name(space), n))
        .collect();
    histogram.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    Ok(DatasetStats {
        n_documents: d.len(),
        per_label_counts: space
            .names()
            .iter()
            .cloned()
            .zip(counts.iter().copied())
            .collect(),
        imbalance_ratio,
        zero_positive_labels: space
            .names()
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c == 0)
            .map(|(n, _)| n.clone())
            .collect(),
        singleton_group_count: groups.values().filter(|&&n| n == 1).count(),
        label_group_histogram: histogram.into_iter().collect(),
    })
}

/// Group-stratified train/validation split.
///
/// The validation size is `round(val_fraction * n)`, apportioned over label
/// groups with at least two members by largest remainder. Each such group
/// keeps at least one document in train; singleton groups stay in train.
/// Both partitions keep ingestion order.
pub fn split(d: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if d.len() < 2 {
        return Err(Error::Invalid("split needs at least 2 documents".into()));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "val_fraction must lie in (0,1), got {val_fraction}"
        )));
    }
    let target = (val_fraction * d.len() as f64).round() as usize;
    if target == 0 {
        return Err(Error::Invalid(format!(
            "val_fraction {val_fraction} leaves an empty validation set for {} documents",
            d.len()
        )));
    }

    // Groups keyed by label set for a seed-stable, ingestion-independent order.
    let mut groups: BTreeMap<&LabelSet, Vec<usize>> = BTreeMap::new();
    for (i, doc) in d.documents().iter().enumerate() {
        groups.entry(&doc.labels).or_default().push(i);
    }
    let eligible: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    let pool: usize = eligible.iter().map(Vec::len).sum();

    let mut quota = vec![0usize; eligible.len()];
    let mut remainders = Vec::with_capacity(eligible.len());
    for (g, members) in eligible.iter().enumerate() {
        let ideal = target as f64 * members.len() as f64 / pool.max(1) as f64;
        quota[g] = (ideal.floor() as usize).min(members.len() - 1);
        remainders.push(ideal - quota[g] as f64);
    }
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.sort_by(|&a, &b| remainders[b].total_cmp(&remainders[a]).then(a.cmp(&b)));
    let mut assigned: usize = quota.iter().sum();
    while assigned < target {
        let before = assigned;
        for &g in &order {
            if assigned == target {
                break;
            }
            if quota[g] < eligible[g].len() - 1 {
                quota[g] += 1;
                assigned += 1;
            }
        }
        if assigned == before {
            break;
        }
    }
    if assigned == 0 {
        return Err(Error::Invalid(
            "no label group has two or more documents; validation set would be empty".into(),
        ));
    }

    let mut in_val = vec![false; d.len()];
    for (g, members) in eligible.iter().enumerate() {
        let mut members = members.clone();
        CounterRng::new(derive_seed(seed, g as u64)).shuffle(&mut members);
        for &i in &members[..quota[g]] {
            in_val[i] = true;
        }
    }
    let (val, train): (Vec<usize>, Vec<usize>) = (0..d.len()).partition(|&i| in_val[i]);
    Ok((d.select(&train), d.select(&val)))
}
