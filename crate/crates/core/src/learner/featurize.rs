use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::TokenSequence;
use crate::error::{Error, Result};
use crate::hash::Fnv1a;
use crate::numeric::compensated_sum;

/// One n-gram extractor: word n-grams over the token sequence or character
/// n-grams inside each `<token>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum NgramOrder {
    Word(usize),
    Char(usize),
}

impl fmt::Display for NgramOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NgramOrder::Word(n) => write!(f, "word:{n}"),
            NgramOrder::Char(n) => write!(f, "char:{n}"),
        }
    }
}

impl FromStr for NgramOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("n-gram order {s:?}; expected word:N or char:N"));
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 || n > 255 {
            return Err(bad());
        }
        match kind {
            "word" => Ok(NgramOrder::Word(n)),
            "char" => Ok(NgramOrder::Char(n)),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for NgramOrder {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NgramOrder> for String {
    fn from(o: NgramOrder) -> String {
        o.to_string()
    }
}

/// A model family: its hashed "vocabulary".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    pub family_id: String,
    pub hash_dim: usize,
    pub ngram_orders: Vec<NgramOrder>,
    /// Weight buckets by inverse document frequency over the training rows.
    #[serde(default = "yes")]
    pub idf: bool,
}

fn yes() -> bool {
    true
}

impl FeaturizerConfig {
    pub fn new(family_id: impl Into<String>, hash_dim: usize, ngram_orders: Vec<NgramOrder>) -> Result<Self> {
        let cfg = FeaturizerConfig {
            family_id: family_id.into(),
            hash_dim,
            ngram_orders,
            idf: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hash_dim < 2 || self.hash_dim > u32::MAX as usize {
            return Err(Error::Invalid(format!("hash_dim {} out of range", self.hash_dim)));
        }
        if self.ngram_orders.is_empty() {
            return Err(Error::Invalid(format!("family {:?} has no n-gram orders", self.family_id)));
        }
        if self.family_id.is_empty()
            || !self
                .family_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            || self.family_id.contains("__")
        {
            return Err(Error::Invalid(format!(
                "family id {:?} must be non-empty ASCII alphanumerics, '-' or single '_'",
                self.family_id
            )));
        }
        Ok(())
    }

    /// word unigrams (16384), word uni+bigrams (32768), char trigrams (16384).
    pub fn default_families() -> Vec<FeaturizerConfig> {
        vec![
            FeaturizerConfig::new("word1", 16_384, vec![NgramOrder::Word(1)]).unwrap(),
            FeaturizerConfig::new("word12", 32_768, vec![NgramOrder::Word(1), NgramOrder::Word(2)]).unwrap(),
            FeaturizerConfig::new("char3", 16_384, vec![NgramOrder::Char(3)]).unwrap(),
        ]
    }
}

/// Sorted-index sparse vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector {
    pub dim: usize,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

/// Hashed n-gram counts, one block per configured order.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramCounts {
    pub dim: usize,
    pub blocks: Vec<SparseVector>,
}

impl NgramCounts {
    /// Buckets hit by any block, ascending.
    pub fn buckets(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self.blocks.iter().flat_map(|b| b.indices.iter().copied()).collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Smoothed inverse document frequency per hash bucket,
/// `ln((1 + n) / (1 + df)) + 1`, and zero for buckets seen in fewer than
/// [`MIN_DF`] rows: those only ever fire for the row that contains them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfWeights {
    pub n_docs: usize,
    pub weights: Vec<f64>,
}

pub const MIN_DF: usize = 2;

impl IdfWeights {
    pub fn fit<'a>(counts: impl IntoIterator<Item = &'a NgramCounts>, dim: usize) -> Self {
        let mut df = vec![0usize; dim];
        let mut n_docs = 0;
        for c in counts {
            n_docs += 1;
            for i in c.buckets() {
                df[i as usize] += 1;
            }
        }
        let n = n_docs as f64;
        IdfWeights {
            n_docs,
            weights: df
                .into_iter()
                .map(|d| if d < MIN_DF { 0.0 } else { ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0 })
                .collect(),
        }
    }
}

/// Sublinear term frequency `1 + ln(count)`, optionally times IDF. Each
/// order's block is L2-normalized and scaled by `1/sqrt(blocks)` before the
/// blocks are summed, so a high-cardinality order (bigrams) cannot drown
/// out a low-cardinality one.
pub fn weigh(counts: &NgramCounts, idf: Option<&IdfWeights>) -> SparseVector {
    let live: Vec<Vec<(u32, f64)>> = counts
        .blocks
        .iter()
        .map(|b| {
            b.iter()
                .map(|(i, c)| (i as u32, (1.0 + c.ln()) * idf.map_or(1.0, |w| w.weights[i])))
                .filter(|&(_, v)| v > 0.0)
                .collect::<Vec<_>>()
        })
        .filter(|b: &Vec<(u32, f64)>| !b.is_empty())
        .collect();
    let share = 1.0 / (live.len().max(1) as f64).sqrt();
    let mut cells: Vec<(u32, f64)> = Vec::new();
    for block in &live {
        let norm = compensated_sum(block.iter().map(|(_, v)| v * v)).sqrt();
        cells.extend(block.iter().map(|&(i, v)| (i, v / norm * share)));
    }
    sum_duplicates(cells, counts.dim)
}

/// Every n-gram adds 1 to its bucket across all orders; the result is
/// L2-normalized. Models train on the [`weigh`]ted form instead.
pub fn featurize(seq: &TokenSequence, cfg: &FeaturizerConfig) -> SparseVector {
    let counts = hash_counts(seq, cfg);
    let cells = counts
        .blocks
        .iter()
        .flat_map(|b| b.indices.iter().copied().zip(b.values.iter().copied()))
        .collect();
    let mut out = sum_duplicates(cells, counts.dim);
    let norm = compensated_sum(out.values.iter().map(|v| v * v)).sqrt();
    out.values.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Sorts by bucket and adds up entries that share one.
fn sum_duplicates(mut cells: Vec<(u32, f64)>, dim: usize) -> SparseVector {
    cells.sort_by_key(|&(i, _)| i);
    let mut out = SparseVector::zeros(dim);
    for (i, v) in cells {
        if out.indices.last() == Some(&i) {
            *out.values.last_mut().unwrap() += v;
        } else {
            out.indices.push(i);
            out.values.push(v);
        }
    }
    out
}

/// Hashes every configured n-gram with FNV-1a modulo `hash_dim` and counts.
pub fn hash_counts(seq: &TokenSequence, cfg: &FeaturizerConfig) -> NgramCounts {
    let dim = cfg.hash_dim as u64;
    let blocks = cfg
        .ngram_orders
        .iter()
        .map(|order| {
            let mut buckets: Vec<u32> = Vec::new();
            match *order {
                NgramOrder::Word(n) => {
                    for window in seq.windows(n) {
                        let mut h = Fnv1a::new().write(b"w").write(&[n as u8]);
                        for tok in window {
                            h = h.write(&[0x1f]).write(tok.as_bytes());
                        }
                        buckets.push((h.finish() % dim) as u32);
                    }
                }
                NgramOrder::Char(n) => {
                    for tok in seq.iter() {
                        let padded: Vec<char> = std::iter::once('<')
                            .chain(tok.chars())
                            .chain(std::iter::once('>'))
                            .collect();
                        let grams: Vec<&[char]> = if padded.len() <= n {
                            vec![&padded[..]]
                        } else {
                            padded.windows(n).collect()
                        };
                        for gram in grams {
                            let mut h = Fnv1a::new().write(b"c").write(&[n as u8]);
                            let mut buf = [0u8; 4];
                            for c in gram {
                                h = h.write(c.encode_utf8(&mut buf).as_bytes());
                            }
                            buckets.push((h.finish() % dim) as u32);
                        }
                    }
                }
            }
            sum_duplicates(buckets.into_iter().map(|b| (b, 1.0)).collect(), cfg.hash_dim)
        })
        .collect();
    NgramCounts {
        dim: cfg.hash_dim,
        blocks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tokens: &[&str]) -> TokenSequence {
        TokenSequence::from_tokens(tokens.iter().copied())
    }

    fn unigram(dim: usize) -> FeaturizerConfig {
        FeaturizerConfig::new("u", dim, vec![NgramOrder::Word(1)]).unwrap()
    }

    #[test]
    fn empty_sequence_is_zero_vector() {
        let v = featurize(&TokenSequence::new(), &unigram(64));
        assert_eq!(v.nnz(), 0);
        assert_eq!(v.dim, 64);
    }

    #[test]
    fn unigrams_are_order_invariant() {
        let cfg = unigram(1024);
        let a = featurize(&seq(&["a", "b", "c", "a"]), &cfg);
        let b = featurize(&seq(&["c", "a", "a", "b"]), &cfg);
        assert_eq!(a, b);
        let bi = FeaturizerConfig::new("b", 1024, vec![NgramOrder::Word(2)]).unwrap();
        assert_ne!(featurize(&seq(&["a", "b", "c"]), &bi), featurize(&seq(&["c", "b", "a"]), &bi));
    }

    #[test]
    fn dimensions_follow_config() {
        let s = seq(&["covid-19", "in", "schools"]);
        for dim in [2, 100, 16_384] {
            let v = featurize(&s, &unigram(dim));
            assert_eq!(v.dim, dim);
            assert!(v.indices.iter().all(|&i| (i as usize) < dim));
        }
    }

    #[test]
    fn unit_norm_and_nonnegative() {
        for cfg in FeaturizerConfig::default_families() {
            let v = featurize(&seq(&["the", "virus", "spreads", "in", "the", "air"]), &cfg);
            let norm: f64 = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(v.values.iter().all(|&x| x > 0.0));
            assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn idf_downweights_common_buckets() {
        let cfg = unigram(4096);
        let docs: Vec<NgramCounts> = [&["the", "alpha"][..], &["the", "beta"], &["the", "gamma"]]
            .iter()
            .map(|t| hash_counts(&seq(t), &cfg))
            .collect();
        let idf = IdfWeights::fit(&docs, cfg.hash_dim);
        assert_eq!(idf.n_docs, 3);
        let common = docs
            .iter()
            .map(|d| d.blocks[0].indices.clone())
            .reduce(|a, b| a.into_iter().filter(|i| b.contains(i)).collect())
            .unwrap();
        assert_eq!(common.len(), 1);
        assert_eq!(idf.weights[common[0] as usize], 1.0);
        // seen once: dropped
        let rare = docs[0].blocks[0].indices.iter().find(|&&i| i != common[0]).unwrap();
        assert_eq!(idf.weights[*rare as usize], 0.0);
        let w = weigh(&docs[0], Some(&idf));
        assert_eq!((w.indices.clone(), w.values.clone()), (common.clone(), vec![1.0]));
        let pair: Vec<NgramCounts> = [&["x", "y"][..], &["x", "z"]]
            .iter()
            .map(|t| hash_counts(&seq(t), &cfg))
            .collect();
        let idf = IdfWeights::fit(&pair, cfg.hash_dim);
        let x = pair[0].blocks[0].indices.iter().find(|i| pair[1].blocks[0].indices.contains(i)).unwrap();
        assert!((idf.weights[*x as usize] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sublinear_counts() {
        let cfg = unigram(4096);
        let v = weigh(&hash_counts(&seq(&["a", "a", "a", "b"]), &cfg), None);
        let hi = v.values[0].max(v.values[1]);
        let lo = v.values[0].min(v.values[1]);
        assert!((hi / lo - (1.0 + 3.0f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn short_tokens_still_yield_char_grams() {
        let cfg = FeaturizerConfig::new("c", 512, vec![NgramOrder::Char(5)]).unwrap();
        assert_eq!(featurize(&seq(&["a"]), &cfg).nnz(), 1);
    }

    #[test]
    fn ngram_order_parsing() {
        assert_eq!("word:2".parse::<NgramOrder>().unwrap(), NgramOrder::Word(2));
        assert_eq!("char:3".parse::<NgramOrder>().unwrap(), NgramOrder::Char(3));
        assert!("word:0".parse::<NgramOrder>().is_err());
        assert!("byte:2".parse::<NgramOrder>().is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(FeaturizerConfig::new("x", 1, vec![NgramOrder::Word(1)]).is_err());
        assert!(FeaturizerConfig::new("x", 8, vec![]).is_err());
        assert!(FeaturizerConfig::new("a/b", 8, vec![NgramOrder::Word(1)]).is_err());
        assert!(FeaturizerConfig::new("a__b", 8, vec![NgramOrder::Word(1)]).is_err());
    }
}
