use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::artifact::Hasher;
use crate::error::{Error, Result};
use crate::text::{Lang, Sentence};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SPECIALS: [&str; 3] = ["<pad>", "<s>", "</s>"];

/// Closed subword vocabulary shared by source and target. Ids 0..3 are
/// padding, start and end of sentence; reserved symbols such as language tags
/// follow, then every other unit in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, reserved: &[String]) -> Self {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for s in sentences {
            seen.extend(s.tokens.iter().map(String::as_str));
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for r in reserved {
            if !tokens.contains(r) {
                tokens.push(r.clone());
            }
        }
        for t in seen {
            if !tokens.iter().any(|x| x == t) {
                tokens.push(t.to_string());
            }
        }
        Vocab::from_tokens(tokens).expect("constructed vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Config(format!("vocabulary must start with {SPECIALS:?}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("vocabulary lists {t:?} twice")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == SPECIALS.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn encode(&self, s: &Sentence) -> Result<Vec<u32>> {
        s.tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| Error::UnknownToken(t.clone())))
            .collect()
    }

    /// Ids up to the first end-of-sentence, dropping padding and start symbols.
    pub fn decode(&self, ids: &[u32], lang: Lang) -> Sentence {
        let tokens = ids
            .iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect();
        Sentence::new(tokens, lang)
    }

    /// Hash of the ordered token list.
    pub fn fingerprint(&self) -> String {
        let mut h = Hasher::new();
        for t in &self.tokens {
            h.update_str(t);
        }
        h.finish()
    }
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Vec<String> {
        v.tokens
    }
}
