//! Shared helpers for the integration tests: brute-force metric oracles and
//! randomized snapshot stores.
#![allow(dead_code)]

use bagstack::learner::EpochSnapshot;
use bagstack::matrix::{BinaryMatrix, ProbMatrix};
use bagstack::metrics::{full_report, Conventions};
use bagstack::rng::CounterRng;
use bagstack::store::SnapshotStore;

pub const N_LABELS: usize = 7;

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("d{i:03}")).collect()
}

pub fn label_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("L{i}")).collect()
}

/// Counts computed one cell at a time, with no shared code paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

pub struct Oracle {
    pub mismatches: u64,
    pub cells: u64,
    pub per_label: Vec<CellCounts>,
    pub hamming: f64,
    pub instance_f1: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

pub fn oracle(pred: &[Vec<u8>], truth: &[Vec<u8>]) -> Oracle {
    let n_labels = truth[0].len();
    let mut per_label = vec![CellCounts { tp: 0, fp: 0, fn_: 0, tn: 0 }; n_labels];
    let mut mismatches = 0u64;
    let mut inst = 0.0f64;
    for (p, t) in pred.iter().zip(truth) {
        let (mut both, mut np, mut nt) = (0u64, 0u64, 0u64);
        for l in 0..n_labels {
            let c = &mut per_label[l];
            match (p[l], t[l]) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
            if p[l] != t[l] {
                mismatches += 1;
            }
            both += (p[l] & t[l]) as u64;
            np += p[l] as u64;
            nt += t[l] as u64;
        }
        inst += if np + nt == 0 { 1.0 } else { 2.0 * both as f64 / (np + nt) as f64 };
    }
    let f1 = |tp: u64, fp: u64, fn_: u64| {
        if 2 * tp + fp + fn_ == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        }
    };
    let (tp, fp, fn_) = per_label
        .iter()
        .fold((0, 0, 0), |(a, b, c), x| (a + x.tp, b + x.fp, c + x.fn_));
    let cells = (pred.len() * n_labels) as u64;
    Oracle {
        mismatches,
        cells,
        hamming: mismatches as f64 / cells as f64,
        instance_f1: inst / pred.len() as f64,
        micro_f1: f1(tp, fp, fn_),
        macro_f1: per_label.iter().map(|c| f1(c.tp, c.fp, c.fn_)).sum::<f64>() / n_labels as f64,
        per_label,
    }
}

/// Mean clipped cross-entropy, accumulated naively in f64.
pub fn oracle_bce(p: &[Vec<f64>], truth: &[Vec<u8>]) -> f64 {
    let eps = 1e-7;
    let mut total = 0.0;
    let mut n = 0.0;
    for (pr, tr) in p.iter().zip(truth) {
        for (&q, &y) in pr.iter().zip(tr) {
            let q = q.clamp(eps, 1.0 - eps);
            total -= if y == 1 { q.ln() } else { (1.0 - q).ln() };
            n += 1.0;
        }
    }
    total / n
}

pub fn rows_of<T: Copy>(values: &[T], n_labels: usize) -> Vec<Vec<T>> {
    values.chunks(n_labels).map(|c| c.to_vec()).collect()
}

pub fn binary(rows: &[Vec<u8>]) -> BinaryMatrix {
    BinaryMatrix::new(ids(rows.len()), rows[0].len(), rows.concat()).unwrap()
}

pub fn random_bits(rng: &mut CounterRng, n: usize, density: f64) -> Vec<u8> {
    (0..n).map(|_| (rng.next_f64() < density) as u8).collect()
}

/// Probabilities on a coarse grid so Hamming ties between snapshots are common.
pub fn random_probs(rng: &mut CounterRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| (rng.index(10) as f64 + 0.5) / 10.0).collect()
}

pub struct StoreShape {
    pub families: usize,
    pub samples: usize,
    pub epochs: usize,
    pub n_docs: usize,
}

pub fn random_store(seed: u64, shape: &StoreShape) -> SnapshotStore {
    let mut rng = CounterRng::new(seed);
    let labels = label_names(N_LABELS);
    let cells = shape.n_docs * N_LABELS;
    let truth = BinaryMatrix::new(ids(shape.n_docs), N_LABELS, random_bits(&mut rng, cells, 0.3)).unwrap();
    let mut store = SnapshotStore::new(labels.clone(), truth.clone(), Conventions::default()).unwrap();
    for f in 0..shape.families {
        for s in 0..shape.samples {
            let family_id = format!("fam{f}");
            let sample_id = format!("s{s}");
            for epoch in 1..=shape.epochs {
                let predictions = ProbMatrix::new(ids(shape.n_docs), N_LABELS, random_probs(&mut rng, cells)).unwrap();
                let report = full_report(&predictions, &truth, &labels, &Conventions::default()).unwrap();
                store
                    .insert(EpochSnapshot {
                        model_id: format!("{family_id}__{sample_id}"),
                        family_id: family_id.clone(),
                        sample_id: sample_id.clone(),
                        epoch,
                        predictions,
                        report,
                        params: None,
                    })
                    .unwrap();
            }
        }
    }
    store
}

/// Brute-force Hamming loss of a stored snapshot against the store truth.
pub fn snapshot_hamming(store: &SnapshotStore, s: &EpochSnapshot) -> f64 {
    let pred: Vec<u8> = s.predictions.values().iter().map(|&p| (p >= 0.5) as u8).collect();
    let t = store.truth().values();
    pred.iter().zip(t).filter(|(a, b)| a != b).count() as f64 / t.len() as f64
}
