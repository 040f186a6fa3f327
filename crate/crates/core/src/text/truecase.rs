use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::Sentence;
use crate::error::{Error, Result};

/// Most frequent surface form per lowercased token type.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TruecaseModel {
    /// lowercase form → (best surface form, count of that form)
    best_form: HashMap<String, (String, u64)>,
}

impl TruecaseModel {
    pub fn best_form(&self, lowercase: &str) -> Option<&str> {
        self.best_form.get(lowercase).map(|(f, _)| f.as_str())
    }

    pub fn len(&self) -> usize {
        self.best_form.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_form.is_empty()
    }

    /// Writes `lowercase TAB best_form TAB count` lines sorted by key.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut keys: Vec<_> = self.best_form.keys().collect();
        keys.sort();
        for k in keys {
            let (form, count) = &self.best_form[k];
            writeln!(w, "{k}\t{form}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut best_form = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|_| Error::InvalidUtf8 { line: i + 1 })?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [key, form, count] = cols[..] else {
                return Err(Error::format("truecase model", i + 1, "expected 3 tab-separated columns"));
            };
            let count = count
                .parse()
                .map_err(|_| Error::format("truecase model", i + 1, "bad count"))?;
            if form.to_lowercase() != key {
                return Err(Error::format("truecase model", i + 1, "best form does not lowercase to its key"));
            }
            best_form.insert(key.to_string(), (form.to_string(), count));
        }
        Ok(TruecaseModel { best_form })
    }
}

#[derive(Default)]
struct FormCounts {
    // (form, count) in first-occurrence order
    forms: Vec<(String, u64)>,
}

impl FormCounts {
    fn add(&mut self, form: &str) {
        match self.forms.iter_mut().find(|(f, _)| f == form) {
            Some((_, c)) => *c += 1,
            None => self.forms.push((form.to_string(), 1)),
        }
    }

    fn best(&self, prefer_lowercase_on_tie: bool) -> Option<(String, u64)> {
        let max = self.forms.iter().map(|(_, c)| *c).max()?;
        let tied = || self.forms.iter().filter(|(_, c)| *c == max);
        if prefer_lowercase_on_tie {
            if let Some(lower) = tied().find(|(f, _)| f.to_lowercase() == *f) {
                return Some(lower.clone());
            }
        }
        tied().next().cloned()
    }
}

/// Learns the most frequent casing of every token type.
///
/// Evidence comes from non-initial positions; ties go to the form seen
/// first. A type that only ever occurs sentence-initially falls back to its
/// counts over all positions, where a tie prefers the all-lowercase form
/// (sentence-initial capitals carry no casing information) and otherwise the
/// first form seen.
pub fn learn_truecaser(corpus: &[Sentence]) -> Result<TruecaseModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("truecaser training corpus"));
    }
    let mut order: Vec<String> = Vec::new();
    let mut non_initial: HashMap<String, FormCounts> = HashMap::new();
    let mut all: HashMap<String, FormCounts> = HashMap::new();
    for s in corpus {
        for (i, tok) in s.tokens.iter().enumerate() {
            let key = tok.to_lowercase();
            if !all.contains_key(&key) {
                order.push(key.clone());
            }
            all.entry(key.clone()).or_default().add(tok);
            if i > 0 {
                non_initial.entry(key).or_default().add(tok);
            }
        }
    }
    let mut best_form = HashMap::with_capacity(order.len());
    for key in order {
        let best = match non_initial.get(&key) {
            Some(counts) => counts.best(false),
            None => all[&key].best(true),
        };
        if let Some(best) = best {
            best_form.insert(key, best);
        }
    }
    Ok(TruecaseModel { best_form })
}

/// Replaces the sentence-initial token by its best form, if the model knows it.
pub fn apply_truecase(model: &TruecaseModel, s: &Sentence) -> Sentence {
    let mut out = s.clone();
    if let Some(first) = out.tokens.first_mut() {
        if let Some(best) = model.best_form(&first.to_lowercase()) {
            *first = best.to_string();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Lang;

    fn sent(s: &str) -> Sentence {
        Sentence::from_line(s, Lang::from("en"))
    }

    #[test]
    fn initial_only_evidence_falls_back() {
        let m = learn_truecaser(&[sent("The cat"), sent("the cat")]).unwrap();
        assert_eq!(m.best_form("the"), Some("the"));
        assert_eq!(m.best_form("cat"), Some("cat"));
    }

    #[test]
    fn non_initial_evidence_wins() {
        let m = learn_truecaser(&[sent("I saw Paris"), sent("Paris is big")]).unwrap();
        assert_eq!(m.best_form("paris"), Some("Paris"));
    }

    #[test]
    fn single_token_corpus() {
        let m = learn_truecaser(&[sent("a")]).unwrap();
        assert_eq!(m.best_form("a"), Some("a"));
    }

    #[test]
    fn non_initial_tie_goes_to_first_seen() {
        let m = learn_truecaser(&[sent("x Apple apple")]).unwrap();
        assert_eq!(m.best_form("apple"), Some("Apple"));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(learn_truecaser(&[]), Err(Error::Empty(_))));
    }

    #[test]
    fn apply_only_touches_first_token() {
        let m = learn_truecaser(&[sent("The cat"), sent("the cat")]).unwrap();
        assert_eq!(apply_truecase(&m, &sent("The cat")).tokens, ["the", "cat"]);
        assert_eq!(apply_truecase(&m, &sent("cat The")).tokens, ["cat", "The"]);
        assert_eq!(apply_truecase(&m, &sent("Dog The")).tokens, ["Dog", "The"]);
        assert!(apply_truecase(&m, &sent("")).is_empty());
    }

    #[test]
    fn serialization_round_trip() {
        let m = learn_truecaser(&[sent("I saw Paris"), sent("Paris is big")]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("paris\tParis\t1\n"));
        assert_eq!(TruecaseModel::read_from(&buf[..]).unwrap(), m);
    }
}
