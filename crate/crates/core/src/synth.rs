//! Synthetic multilabel corpus shaped like the LitCovid topic set: seven
//! labels with a configurable majority/minority ratio, a share of
//! two-label documents, a few one-off label combinations, and label-specific
//! vocabulary so the task is learnable.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::augment::MaskLexicon;
use crate::corpus::{Dataset, Document, LabelSet, LabelSpace};
use crate::error::{Error, Result};
use crate::rng::{derive_seed_str, CounterRng};

pub const MIN_DOCS: usize = 100;
pub const DEFAULT_IMBALANCE: f64 = 15.0;

const SECONDARY_SHARE: f64 = 0.3;
const LABEL_POOL: usize = 40;
/// Words each label borrows from the next label's pool.
const SHARED_WITH_NEXT: usize = 8;
/// Per-emission probabilities; every other emission is a background chunk.
const LABEL_TOKEN_RATE: f64 = 0.07;
const STRAY_TOKEN_RATE: f64 = 0.03;
const COVID_TERM_RATE: f64 = 0.02;
/// Background text is drawn from recurring 1-4 word chunks so that word
/// bigrams repeat the way stock phrases do in real abstracts.
const CHUNKS: usize = 400;
const EMPTY_KEYWORDS_SHARE: f64 = 0.3;

const ONSETS: [&str; 16] = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
const CODAS: [&str; 6] = ["", "", "n", "r", "s", "x"];

const BACKGROUND: &str = "the of and in to a with for was were is are on by from that this as at be \
    we our these which or an than not after before between within during among all both more most \
    less each other such it its their has have had been also may can could would should two three \
    first second total mean median age years days weeks months group groups cohort sample samples \
    level levels rate rates number cases case report reports subjects participants individuals \
    adults children women men country countries region regional national hospitalized admission \
    admitted intensive unit units follow period time trend trends distribution data survey \
    questionnaire interview response responses compared comparison difference differences \
    statistically odds ratio confidence interval interval values value score scores baseline \
    primary secondary end point points assessed assessment measured measurement performed \
    included excluded identified reported described found conducted collected evaluated estimated \
    however therefore furthermore moreover although while whereas thus overall finally conclusion \
    conclusions background objective objectives aim aims methods results study patients \
    increase decrease significant important method data use show suggest risk severe mild rapid \
    large small high low effect factors early current new common model analysis review evidence \
    population hospital care infection outcome approach potential global health public measures \
    clinical associated based including observed";

fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let ideal: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (ideal[b] - counts[b] as f64).total_cmp(&(ideal[a] - counts[a] as f64)).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

fn pseudo_word(rng: &mut CounterRng) -> String {
    let syllables = 2 + rng.index(2);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS[rng.index(ONSETS.len())]);
        w.push_str(VOWELS[rng.index(VOWELS.len())]);
    }
    w.push_str(CODAS[rng.index(CODAS.len())]);
    w
}

struct Vocabulary {
    label_pools: Vec<Vec<String>>,
    background: Vec<String>,
    chunks: Vec<Vec<String>>,
    covid: Vec<String>,
}

/// Index in `0..n` skewed towards the front.
fn skewed(rng: &mut CounterRng, n: usize) -> usize {
    let u = rng.next_f64();
    ((u * u) * n as f64) as usize
}

impl Vocabulary {
    fn new(n_labels: usize, seed: u64) -> Self {
        let mut rng = CounterRng::new(derive_seed_str(seed, "vocabulary"));
        let mut seen = BTreeSet::new();
        let own: Vec<Vec<String>> = (0..n_labels)
            .map(|_| {
                let mut pool = Vec::with_capacity(LABEL_POOL);
                while pool.len() < LABEL_POOL {
                    let w = pseudo_word(&mut rng);
                    if seen.insert(w.clone()) {
                        pool.push(w);
                    }
                }
                pool
            })
            .collect();
        let label_pools = (0..n_labels)
            .map(|l| {
                let mut pool = own[l].clone();
                pool.extend(own[(l + 1) % n_labels].iter().take(SHARED_WITH_NEXT).cloned());
                pool
            })
            .collect();
        let mut listed = BTreeSet::new();
        let background: Vec<String> = BACKGROUND
            .split_whitespace()
            .filter(|w| listed.insert(*w))
            .map(String::from)
            .collect();
        let covid = MaskLexicon::covid(crate::augment::MaskMode::Mask)
            .phrases()
            .map(|p| p.join(" "))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let chunks = (0..CHUNKS)
            .map(|_| {
                (0..1 + rng.index(4))
                    .map(|_| background[skewed(&mut rng, background.len())].clone())
                    .collect()
            })
            .collect();
        Vocabulary {
            label_pools,
            background,
            chunks,
            covid,
        }
    }

    fn background_word(&self, rng: &mut CounterRng) -> &str {
        &self.background[skewed(rng, self.background.len())]
    }

    /// Appends one emission: a label word, a stray word from any label, a
    /// COVID term, or a background chunk.
    fn emit(&self, labels: &[usize], rng: &mut CounterRng, out: &mut Vec<String>) {
        let u = rng.next_f64();
        if u < LABEL_TOKEN_RATE {
            let pool = &self.label_pools[labels[rng.index(labels.len())]];
            out.push(pool[rng.index(pool.len())].clone());
        } else if u < LABEL_TOKEN_RATE + STRAY_TOKEN_RATE {
            let pool = &self.label_pools[rng.index(self.label_pools.len())];
            out.push(pool[rng.index(pool.len())].clone());
        } else if u < LABEL_TOKEN_RATE + STRAY_TOKEN_RATE + COVID_TERM_RATE {
            out.push(self.covid[rng.index(self.covid.len())].clone());
        } else {
            out.extend(self.chunks[skewed(rng, self.chunks.len())].iter().cloned());
        }
    }

    /// At least `len` words.
    fn sentence(&self, labels: &[usize], len: usize, rng: &mut CounterRng) -> String {
        let mut words = Vec::with_capacity(len + 4);
        while words.len() < len {
            self.emit(labels, rng, &mut words);
        }
        capitalize(&words.join(" "))
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Label sets before shuffling: single-label primaries apportioned by
/// geometric weights, a second label on a share of them (same weights), and
/// three three-label documents whose combinations occur nowhere else.
fn label_sets(n_docs: usize, n_labels: usize, imbalance: f64, rng: &mut CounterRng) -> Vec<Vec<usize>> {
    let weights: Vec<f64> = (0..n_labels)
        .map(|l| imbalance.powf(-(l as f64) / (n_labels - 1) as f64))
        .collect();
    let triples: Vec<Vec<usize>> = [[0, 3, 5], [1, 4, 6], [2, 3, 6]]
        .iter()
        .map(|t| t.iter().map(|&l| l % n_labels).collect::<BTreeSet<_>>().into_iter().collect())
        .filter(|t: &Vec<usize>| t.len() == 3)
        .collect();
    let singles = n_docs - triples.len();
    let mut sets: Vec<Vec<usize>> = apportion(singles, &weights)
        .into_iter()
        .enumerate()
        .flat_map(|(l, c)| std::iter::repeat(vec![l]).take(c))
        .collect();
    let secondary = apportion((SECONDARY_SHARE * singles as f64).round() as usize, &weights);
    for (l, &count) in secondary.iter().enumerate() {
        let mut eligible: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].len() == 1 && sets[i][0] != l).collect();
        rng.shuffle(&mut eligible);
        for &i in eligible.iter().take(count) {
            sets[i].push(l);
            sets[i].sort_unstable();
        }
    }
    sets.extend(triples);
    sets
}

/// Generates `n_docs` documents over the LitCovid topic names.
pub fn synth(n_docs: usize, imbalance: f64, seed: u64) -> Result<Dataset> {
    if n_docs < MIN_DOCS {
        return Err(Error::Invalid(format!("synth needs at least {MIN_DOCS} documents, got {n_docs}")));
    }
    if !(imbalance >= 1.0 && imbalance.is_finite()) {
        return Err(Error::Invalid(format!("imbalance target must be at least 1, got {imbalance}")));
    }
    let space = Arc::new(LabelSpace::litcovid());
    let n_labels = space.len();
    let vocab = Vocabulary::new(n_labels, seed);
    let mut rng = CounterRng::new(derive_seed_str(seed, "labels"));
    let mut sets = label_sets(n_docs, n_labels, imbalance, &mut rng);
    rng.shuffle(&mut sets);

    let mut rng = CounterRng::new(derive_seed_str(seed, "text"));
    let documents = sets
        .into_iter()
        .enumerate()
        .map(|(i, labels)| {
            let title_len = 6 + rng.index(7);
            let title = vocab.sentence(&labels, title_len, &mut rng);
            let keywords = if rng.next_f64() < EMPTY_KEYWORDS_SHARE {
                Vec::new()
            } else {
                (0..2 + rng.index(4))
                    .map(|_| {
                        let n = 1 + rng.index(2);
                        (0..n)
                            .map(|_| {
                                if rng.next_f64() < 0.5 {
                                    let pool = &vocab.label_pools[labels[rng.index(labels.len())]];
                                    pool[rng.index(pool.len())].clone()
                                } else {
                                    vocab.background_word(&mut rng).to_string()
                                }
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    })
                    .collect()
            };
            let target = 150 + rng.index(251);
            let mut sentences = Vec::new();
            let mut written = 0;
            while written < target {
                let len = (8 + rng.index(13)).min(target - written);
                let s = vocab.sentence(&labels, len, &mut rng);
                written += s.split(' ').count();
                sentences.push(s);
            }
            let mut bits = vec![0u8; n_labels];
            labels.iter().for_each(|&l| bits[l] = 1);
            Ok(Document {
                id: format!("doc{i:05}"),
                title,
                keywords,
                abstract_text: sentences.join(". ") + ".",
                labels: LabelSet::from_bits(bits)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(space, documents)
}
