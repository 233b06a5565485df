//! Row-major document x label matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::format_f64;

/// Probabilities, one row per document, one column per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMatrix {
    doc_ids: Vec<String>,
    n_labels: usize,
    values: Vec<f64>,
}

/// Hard 0/1 assignments with the same layout as [`ProbMatrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    doc_ids: Vec<String>,
    n_labels: usize,
    values: Vec<u8>,
}

fn check_shape(doc_ids: &[String], n_labels: usize, len: usize) -> Result<()> {
    if n_labels == 0 {
        return Err(Error::Shape("matrix needs at least one label column".into()));
    }
    if doc_ids.len() * n_labels != len {
        return Err(Error::Shape(format!(
            "{} documents x {n_labels} labels needs {} values, got {len}",
            doc_ids.len(),
            doc_ids.len() * n_labels
        )));
    }
    Ok(())
}

impl ProbMatrix {
    /// Every value must lie strictly inside (0, 1).
    pub fn new(doc_ids: Vec<String>, n_labels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(&doc_ids, n_labels, values.len())?;
        if let Some(pos) = values.iter().position(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Invalid(format!(
                "probability {} at document {:?}, label column {} is outside (0,1)",
                values[pos],
                doc_ids[pos / n_labels],
                pos % n_labels
            )));
        }
        Ok(ProbMatrix {
            doc_ids,
            n_labels,
            values,
        })
    }

    /// Like [`ProbMatrix::new`] but accepts the closed interval [0, 1]; used
    /// for targets.
    pub fn new_closed(doc_ids: Vec<String>, n_labels: usize, values: Vec<f64>) -> Result<Self> {
        check_shape(&doc_ids, n_labels, values.len())?;
        if let Some(pos) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid(format!(
                "value {} at document {:?}, label column {} is outside [0,1]",
                values[pos],
                doc_ids[pos / n_labels],
                pos % n_labels
            )));
        }
        Ok(ProbMatrix {
            doc_ids,
            n_labels,
            values,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_labels..(i + 1) * self.n_labels]
    }

    pub fn get(&self, doc: usize, label: usize) -> f64 {
        self.values[doc * self.n_labels + label]
    }

    /// Rows reordered to follow `doc_ids`.
    pub fn reindex(&self, doc_ids: &[String]) -> Result<ProbMatrix> {
        let pos: std::collections::HashMap<&str, usize> =
            self.doc_ids.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
        let mut values = Vec::with_capacity(doc_ids.len() * self.n_labels);
        for id in doc_ids {
            let &i = pos
                .get(id.as_str())
                .ok_or_else(|| Error::Shape(format!("document {id:?} missing from matrix")))?;
            values.extend_from_slice(self.row(i));
        }
        Ok(ProbMatrix {
            doc_ids: doc_ids.to_vec(),
            n_labels: self.n_labels,
            values,
        })
    }

    /// CSV with header `doc_id,<label…>` and 17-significant-digit values.
    pub fn to_csv(&self, labels: &[String]) -> Result<Vec<u8>> {
        write_csv(&self.doc_ids, labels, self.n_labels, |i| format_f64(self.values[i]))
    }

    pub fn from_csv(bytes: &[u8], origin: &Path) -> Result<(Vec<String>, ProbMatrix)> {
        let (labels, ids, raw) = read_csv(bytes, origin)?;
        let n = labels.len();
        let mut values = Vec::with_capacity(raw.len());
        for (k, cell) in raw.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(origin, k / n + 2, format!("bad number {cell:?} in column {:?}", labels[k % n]))
            })?;
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::parse(
                    origin,
                    k / n + 2,
                    format!(
                        "value {v} for document {:?}, label {:?} is outside (0,1)",
                        ids[k / n],
                        labels[k % n]
                    ),
                ));
            }
            values.push(v);
        }
        Ok((labels, ProbMatrix::new(ids, n, values)?))
    }
}

impl BinaryMatrix {
    pub fn new(doc_ids: Vec<String>, n_labels: usize, values: Vec<u8>) -> Result<Self> {
        check_shape(&doc_ids, n_labels, values.len())?;
        if values.iter().any(|&v| v > 1) {
            return Err(Error::Invalid("binary matrix entries must be 0 or 1".into()));
        }
        Ok(BinaryMatrix {
            doc_ids,
            n_labels,
            values,
        })
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * self.n_labels..(i + 1) * self.n_labels]
    }

    pub fn get(&self, doc: usize, label: usize) -> u8 {
        self.values[doc * self.n_labels + label]
    }

    pub fn complement(&self) -> BinaryMatrix {
        BinaryMatrix {
            doc_ids: self.doc_ids.clone(),
            n_labels: self.n_labels,
            values: self.values.iter().map(|v| 1 - v).collect(),
        }
    }

    pub fn to_csv(&self, labels: &[String]) -> Result<Vec<u8>> {
        write_csv(&self.doc_ids, labels, self.n_labels, |i| self.values[i].to_string())
    }

    pub fn from_csv(bytes: &[u8], origin: &Path) -> Result<(Vec<String>, BinaryMatrix)> {
        let (labels, ids, raw) = read_csv(bytes, origin)?;
        let n = labels.len();
        let mut values = Vec::with_capacity(raw.len());
        for (k, cell) in raw.iter().enumerate() {
            values.push(match cell.as_str() {
                "0" => 0,
                "1" => 1,
                _ => {
                    return Err(Error::parse(
                        origin,
                        k / n + 2,
                        format!("expected 0 or 1, got {cell:?}"),
                    ))
                }
            });
        }
        Ok((labels, BinaryMatrix::new(ids, n, values)?))
    }
}

fn write_csv(
    doc_ids: &[String],
    labels: &[String],
    n_labels: usize,
    cell: impl Fn(usize) -> String,
) -> Result<Vec<u8>> {
    if labels.len() != n_labels {
        return Err(Error::Shape(format!(
            "{} label names for {n_labels} columns",
            labels.len()
        )));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
    let mut header = vec!["doc_id".to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in doc_ids.iter().enumerate() {
        let mut rec = Vec::with_capacity(n_labels + 1);
        rec.push(id.clone());
        rec.extend((0..n_labels).map(|j| cell(i * n_labels + j)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv: {e}")))
}

type RawCsv = (Vec<String>, Vec<String>, Vec<String>);

fn read_csv(bytes: &[u8], origin: &Path) -> Result<RawCsv> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    if header.get(0) != Some("doc_id") || header.len() < 2 {
        return Err(Error::parse(origin, 1, "header must be doc_id,<label…>"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(String::from).collect();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(origin, i + 2, e.to_string()))?;
        if rec.len() != labels.len() + 1 {
            return Err(Error::parse(
                origin,
                i + 2,
                format!("expected {} fields, found {}", labels.len() + 1, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        cells.extend(rec.iter().skip(1).map(String::from));
    }
    Ok((labels, ids, cells))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("d{i}")).collect()
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(ProbMatrix::new(ids(2), 2, vec![0.5; 3]).is_err());
        let err = ProbMatrix::new(ids(2), 2, vec![0.5, 0.5, 1.0, 0.5]).unwrap_err();
        assert!(err.to_string().contains("\"d1\""), "{err}");
        assert!(BinaryMatrix::new(ids(1), 2, vec![0, 2]).is_err());
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let labels = vec!["A".to_string(), "Case Report".to_string()];
        let m = ProbMatrix::new(ids(2), 2, vec![0.1, 1.0 / 3.0, 1e-7, 0.999_999_9]).unwrap();
        let bytes = m.to_csv(&labels).unwrap();
        assert!(String::from_utf8_lossy(&bytes).starts_with("doc_id,A,Case Report\n"));
        let (l, back) = ProbMatrix::from_csv(&bytes, Path::new("m.csv")).unwrap();
        assert_eq!(l, labels);
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_out_of_range_cell() {
        let text = b"doc_id,A\nx,0.5\ny,1.5\n";
        let err = ProbMatrix::from_csv(text, Path::new("m.csv")).unwrap_err().to_string();
        assert!(err.contains("\"y\"") && err.contains("\"A\"") && err.contains(":3:"), "{err}");
    }

    #[test]
    fn binary_csv_round_trip() {
        let labels = vec!["A".to_string(), "B".to_string()];
        let m = BinaryMatrix::new(ids(2), 2, vec![1, 0, 0, 1]).unwrap();
        let (_, back) = BinaryMatrix::from_csv(&m.to_csv(&labels).unwrap(), Path::new("t")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reindex_follows_requested_order() {
        let m = ProbMatrix::new(ids(2), 1, vec![0.2, 0.8]).unwrap();
        let r = m.reindex(&["d1".to_string(), "d0".to_string()]).unwrap();
        assert_eq!(r.values(), &[0.8, 0.2]);
        assert!(m.reindex(&["zz".to_string()]).is_err());
    }
}
