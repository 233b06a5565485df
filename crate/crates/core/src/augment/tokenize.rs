use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Lowercase tokens with no empty entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new() -> Self {
        TokenSequence(Vec::new())
    }

    /// Wraps tokens that are already normalized. Empty strings are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        TokenSequence(
            tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        )
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn truncate(&mut self, max_tokens: usize) {
        self.0.truncate(max_tokens);
    }

    pub fn extend(&mut self, other: TokenSequence) {
        self.0.extend(other.0);
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSequence {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl FromIterator<String> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        Self::from_tokens(iter)
    }
}

/// Lowercases, then splits on whitespace and punctuation. Tokens are runs of
/// alphanumeric characters; a hyphen joining two alphanumeric runs stays
/// inside the token (`covid-19`), every other punctuation mark is dropped.
pub fn tokenize(text: &str) -> TokenSequence {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let joins = c == '-' && !current.is_empty() && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence(tokens)
}
