use std::collections::HashMap;
use std::path::Path;

use super::tokenize::{tokenize, TokenSequence};
use crate::error::{Error, Result};
use crate::rng::CounterRng;

const DEFAULT_SYNONYMS: &str = include_str!("../../data/synonyms.tsv");

/// token -> synonyms. Keys and synonyms are single lowercase tokens.
#[derive(Debug, Clone, Default)]
pub struct SynonymLexicon {
    entries: HashMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Parses `term<TAB>syn1|syn2|...` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (term, syns) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "expected term<TAB>synonyms"))?;
            let term = single_token(term)
                .ok_or_else(|| Error::parse(origin, lineno, format!("term {term:?} is not one token")))?;
            let mut list = Vec::new();
            for syn in syns.split('|').filter(|s| !s.trim().is_empty()) {
                let syn = single_token(syn).ok_or_else(|| {
                    Error::parse(origin, lineno, format!("synonym {syn:?} is not one token"))
                })?;
                if syn != term && !list.contains(&syn) {
                    list.push(syn);
                }
            }
            if list.is_empty() {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("{term:?} has no synonym other than itself"),
                ));
            }
            let slot = entries.entry(term).or_default();
            for syn in list {
                if !slot.contains(&syn) {
                    slot.push(syn);
                }
            }
        }
        Ok(SynonymLexicon { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?, path)
    }

    /// Small general-purpose English lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_SYNONYMS, Path::new("<bundled synonyms>"))
            .expect("bundled synonyms are valid")
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, Vec<V>)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let text: String = pairs
            .into_iter()
            .map(|(k, vs)| {
                let joined: Vec<&str> = vs.iter().map(AsRef::as_ref).collect();
                format!("{}\t{}\n", k.as_ref(), joined.join("|"))
            })
            .collect();
        Self::parse(&text, Path::new("<pairs>"))
    }

    /// Case-insensitive lookup.
    pub fn get(&self, token: &str) -> Option<&[String]> {
        match self.entries.get(token) {
            Some(v) => Some(v),
            None => self.entries.get(&token.to_lowercase()).map(Vec::as_slice),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn single_token(text: &str) -> Option<String> {
    let mut toks = tokenize(text).into_inner();
    (toks.len() == 1).then(|| toks.pop().unwrap())
}

/// Replaces each token that has synonyms, independently with probability
/// `rate`, by one of its synonyms chosen uniformly. Length is preserved.
pub fn substitute_synonyms(
    seq: &TokenSequence,
    lex: &SynonymLexicon,
    rate: f64,
    seed: u64,
) -> TokenSequence {
    let mut rng = CounterRng::new(seed);
    seq.iter()
        .map(|tok| match lex.get(tok) {
            Some(syns) if rng.next_f64() < rate => syns[rng.index(syns.len())].clone(),
            _ => tok.clone(),
        })
        .collect()
}
