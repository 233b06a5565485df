use std::collections::{BTreeSet, HashMap};

use super::tokenize::TokenSequence;
use crate::rng::CounterRng;

/// Source of contextual replacements for [`inject_noise`].
///
/// A proposal is one token or a group of tokens. Returning `None`, an empty
/// group, or the original token counts as a failure at that position.
pub trait NoiseProvider {
    fn propose(&self, context: &[String], position: usize, rng: &mut CounterRng)
        -> Option<Vec<String>>;
}

/// Draws a uniform token of a fixed vocabulary, never the original one.
#[derive(Debug, Clone)]
pub struct VocabularyNoise {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
}

impl VocabularyNoise {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: Vec<String> = tokens
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = vocab.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        VocabularyNoise { vocab, index }
    }

    /// Vocabulary of every token in `seqs`, sorted.
    pub fn from_corpus<'a, I>(seqs: I) -> Self
    where
        I: IntoIterator<Item = &'a TokenSequence>,
    {
        Self::new(seqs.into_iter().flat_map(|s| s.iter().cloned()))
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }
}

impl NoiseProvider for VocabularyNoise {
    fn propose(&self, context: &[String], position: usize, rng: &mut CounterRng) -> Option<Vec<String>> {
        let original = context.get(position)?;
        match self.index.get(original) {
            Some(&own) => {
                if self.vocab.len() < 2 {
                    return None;
                }
                // Uniform over the vocabulary minus `own`.
                let mut j = rng.index(self.vocab.len() - 1);
                if j >= own {
                    j += 1;
                }
                Some(vec![self.vocab[j].clone()])
            }
            None if self.vocab.is_empty() => None,
            None => Some(vec![self.vocab[rng.index(self.vocab.len())].clone()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseOutcome {
    pub tokens: TokenSequence,
    pub replaced: usize,
    /// Positions selected for replacement where the provider failed.
    pub failures: usize,
}

/// Replaces each position independently with probability `rate` by the
/// provider's proposal. Failed proposals leave the token unchanged.
pub fn inject_noise(
    seq: &TokenSequence,
    provider: &dyn NoiseProvider,
    rate: f64,
    seed: u64,
) -> NoiseOutcome {
    let mut rng = CounterRng::new(seed);
    let mut out = Vec::with_capacity(seq.len());
    let (mut replaced, mut failures) = (0, 0);
    for (pos, tok) in seq.iter().enumerate() {
        if rng.next_f64() >= rate {
            out.push(tok.clone());
            continue;
        }
        match provider.propose(seq, pos, &mut rng) {
            Some(group) if !group.is_empty() && !(group.len() == 1 && &group[0] == tok) => {
                out.extend(group);
                replaced += 1;
            }
            _ => {
                out.push(tok.clone());
                failures += 1;
            }
        }
    }
    NoiseOutcome {
        tokens: TokenSequence::from_tokens(out),
        replaced,
        failures,
    }
}
