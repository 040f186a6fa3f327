//! Deterministic corpus preprocessing.
//!
//! The stages run in this order: [`normalize`] a raw line, [`tokenize`] it
//! into a [`Sentence`], optionally true-case the first token with a learned
//! [`TruecaseModel`], and finally drop pairs or monolingual lines that fall
//! outside the configured length window.

mod filter;
pub mod io;
mod normalize;
mod tokenize;
mod truecase;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use filter::{filter_mono, filter_parallel, DEFAULT_MAX_LEN, DEFAULT_MONO_MIN_EXCLUSIVE};
pub use normalize::normalize;
pub use tokenize::tokenize;
pub use truecase::{apply_truecase, learn_truecaser, TruecaseModel};

/// Language identifier such as `"en"` or `"tl"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lang(pub String);

impl Lang {
    pub fn new(id: impl Into<String>) -> Self {
        Lang(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Lang {
    fn from(s: &str) -> Self {
        Lang(s.to_string())
    }
}

/// A tokenized sentence. Tokens are never empty and never contain whitespace.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub lang: Lang,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, lang: Lang) -> Self {
        debug_assert!(tokens
            .iter()
            .all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)));
        Sentence { tokens, lang }
    }

    /// Splits `line` on whitespace without any punctuation handling.
    pub fn from_line(line: &str, lang: Lang) -> Self {
        Sentence {
            tokens: line.split_whitespace().map(str::to_string).collect(),
            lang,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}
