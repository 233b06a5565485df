use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, TokenSequence};
use crate::error::{Error, Result};

pub const MASK_TOKEN: &str = "[mask]";

const DEFAULT_TERMS: &str = include_str!("../../data/covid_terms.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    Delete,
    #[default]
    Mask,
}

/// Terms treated as constants across labels; matched as whole token phrases.
#[derive(Debug, Clone)]
pub struct MaskLexicon {
    phrases: HashSet<Vec<String>>,
    /// Distinct phrase lengths, longest first.
    lengths: Vec<usize>,
    mode: MaskMode,
}

impl MaskLexicon {
    pub fn new<I, S>(terms: I, mode: MaskMode) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let phrases: HashSet<Vec<String>> = terms
            .into_iter()
            .map(|t| tokenize(t.as_ref()).into_inner())
            .filter(|p| !p.is_empty())
            .collect();
        if phrases.is_empty() {
            return Err(Error::Invalid("mask lexicon has no terms".into()));
        }
        let mut lengths: Vec<usize> = phrases.iter().map(Vec::len).collect();
        lengths.sort_unstable_by(|a, b| b.cmp(a));
        lengths.dedup();
        Ok(MaskLexicon {
            phrases,
            lengths,
            mode,
        })
    }

    /// Bundled COVID-19 term list.
    pub fn covid(mode: MaskMode) -> Self {
        Self::parse(DEFAULT_TERMS, mode).expect("bundled term list is valid")
    }

    /// One term or phrase per line, `#` starts a comment line.
    pub fn parse(text: &str, mode: MaskMode) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
            mode,
        )
    }

    pub fn from_file(path: &Path, mode: MaskMode) -> Result<Self> {
        Self::parse(&crate::io::read_to_string(path)?, mode)
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: MaskMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn phrases(&self) -> impl Iterator<Item = &[String]> {
        self.phrases.iter().map(Vec::as_slice)
    }

    /// Length of the longest phrase starting at `tokens[at]`, if any.
    fn match_at(&self, tokens: &[String], at: usize) -> Option<usize> {
        self.lengths.iter().copied().find(|&len| {
            at + len <= tokens.len() && self.phrases.contains(&tokens[at..at + len])
        })
    }

    fn single_pass(&self, tokens: &[String]) -> (Vec<String>, bool) {
        let mut out = Vec::with_capacity(tokens.len());
        let mut changed = false;
        let mut i = 0;
        while i < tokens.len() {
            match self.match_at(tokens, i) {
                Some(len) => {
                    if self.mode == MaskMode::Mask {
                        out.push(MASK_TOKEN.to_string());
                    }
                    i += len;
                    changed = true;
                }
                None => {
                    out.push(tokens[i].clone());
                    i += 1;
                }
            }
        }
        (out, changed)
    }
}

/// Deletes or masks every lexicon phrase, longest match first.
///
/// Deletion can splice a new phrase together from its neighbours, so Delete
/// mode repeats until no phrase remains.
pub fn mask_lexicon_terms(seq: &TokenSequence, lex: &MaskLexicon) -> TokenSequence {
    let (mut tokens, mut changed) = lex.single_pass(seq);
    while changed && lex.mode == MaskMode::Delete {
        (tokens, changed) = lex.single_pass(&tokens);
    }
    TokenSequence::from_tokens(tokens)
}
