//! Joint byte-pair encoding over both languages of a pair.
//!
//! Merges are learned greedily from a single word-frequency dictionary built
//! over the concatenation of all input corpora, so both languages share one
//! merge list and one subword inventory. Segmented output marks every
//! non-final unit of a word with the [`JOINER`] suffix (`low` → `lo@@ w`),
//! which makes [`merge_bpe`] an exact inverse of [`BpeModel::apply`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::artifact::hash_sentences;
use crate::error::{Error, Result};
use crate::text::Sentence;

/// Suffix carried by every non-final unit of a segmented word.
pub const JOINER: &str = "@@";
/// End-of-word marker attached to the last symbol during learning.
pub const EOW: &str = "</w>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    num_ops: usize,
    data_hash: String,
    protected: BTreeSet<String>,
}

#[derive(PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Highest count first; among equal counts the lexicographically smallest pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Symbols {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Symbols {
    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        id
    }
}

fn word_symbols(word: &str) -> Vec<String> {
    let mut syms: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = syms.last_mut() {
        last.push_str(EOW);
    }
    syms
}

/// Learns up to `num_ops` merges from the union of `corpora`.
///
/// Each step merges the most frequent adjacent symbol pair, counting pair
/// occurrences weighted by word frequency. Ties go to the lexicographically
/// smallest `(left, right)` pair. Learning stops early once no pair occurs at
/// least twice.
pub fn learn_bpe(corpora: &[Sentence], num_ops: usize) -> Result<BpeModel> {
    if corpora.is_empty() {
        return Err(Error::Empty("BPE training corpora"));
    }
    let mut vocab: BTreeMap<&str, u64> = BTreeMap::new();
    for s in corpora {
        for t in &s.tokens {
            *vocab.entry(t.as_str()).or_default() += 1;
        }
    }

    let mut symbols = Symbols {
        names: Vec::new(),
        ids: HashMap::new(),
    };
    let mut words: Vec<(Vec<u32>, u64)> = vocab
        .iter()
        .map(|(w, &f)| (word_symbols(w).iter().map(|s| symbols.intern(s)).collect(), f))
        .collect();

    let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut occurs_in: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (syms, f)) in words.iter().enumerate() {
        for p in syms.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_default() += f;
            occurs_in.entry(pair).or_default().insert(wi);
        }
    }

    let candidate = |pair: (u32, u32), count: u64, symbols: &Symbols| Candidate {
        count,
        left: symbols.names[pair.0 as usize].clone(),
        right: symbols.names[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_counts
        .iter()
        .map(|(&pair, &count)| candidate(pair, count, &symbols))
        .collect();

    let mut merges = Vec::new();
    while merges.len() < num_ops {
        let Some(top) = heap.pop() else { break };
        if pair_counts.get(&top.pair).copied().unwrap_or(0) != top.count {
            continue; // stale entry
        }
        if top.count < 2 {
            break;
        }
        let (a, b) = top.pair;
        let merged = symbols.intern(&format!("{}{}", top.left, top.right));
        merges.push((top.left, top.right));

        let mut affected: Vec<usize> = occurs_in.remove(&(a, b)).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut changed: BTreeSet<(u32, u32)> = BTreeSet::new();
        for wi in affected {
            let (syms, f) = &mut words[wi];
            if !syms.windows(2).any(|p| p[0] == a && p[1] == b) {
                continue;
            }
            for p in syms.windows(2) {
                let pair = (p[0], p[1]);
                if let Some(c) = pair_counts.get_mut(&pair) {
                    *c -= *f;
                }
                changed.insert(pair);
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    out.push(merged);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
            for p in syms.windows(2) {
                let pair = (p[0], p[1]);
                *pair_counts.entry(pair).or_default() += *f;
                occurs_in.entry(pair).or_default().insert(wi);
                changed.insert(pair);
            }
        }
        pair_counts.remove(&(a, b));
        for pair in changed {
            match pair_counts.get(&pair).copied() {
                Some(0) => {
                    pair_counts.remove(&pair);
                }
                Some(count) => heap.push(candidate(pair, count, &symbols)),
                None => {}
            }
        }
    }

    Ok(BpeModel::from_merges(merges, num_ops, hash_sentences(corpora)))
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>, num_ops: usize, data_hash: String) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        BpeModel {
            merges,
            ranks,
            num_ops,
            data_hash,
            protected: BTreeSet::new(),
        }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn num_ops(&self) -> usize {
        self.num_ops
    }

    pub fn data_hash(&self) -> &str {
        &self.data_hash
    }

    pub fn protected(&self) -> impl Iterator<Item = &str> {
        self.protected.iter().map(String::as_str)
    }

    /// Registers tokens (language tags) that segmentation must leave intact.
    pub fn protect<I, S>(&mut self, tokens: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for t in tokens {
            let t = t.into();
            if t.is_empty() || t.ends_with(JOINER) || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("cannot protect token {t:?}")));
            }
            self.protected.insert(t);
        }
        Ok(())
    }

    /// Fails unless the model was learned on data with hash `data_hash`.
    pub fn ensure_fresh(&self, data_hash: &str, allow_stale: bool) -> Result<()> {
        if allow_stale || self.data_hash == data_hash {
            Ok(())
        } else {
            Err(Error::StaleModel {
                kind: "BPE",
                model_hash: self.data_hash.clone(),
                data_hash: data_hash.to_string(),
            })
        }
    }

    /// Segments one word into subword units, joiners included.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        if self.protected.contains(word) {
            return vec![word.to_string()];
        }
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| self.ranks.get(&(p[0].clone(), p[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (a, b) = &self.merges[rank];
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && &syms[i] == a && &syms[i + 1] == b {
                    out.push(format!("{a}{b}"));
                    i += 2;
                } else {
                    out.push(std::mem::take(&mut syms[i]));
                    i += 1;
                }
            }
            syms = out;
        }
        let last = syms.last_mut().expect("words are non-empty");
        last.truncate(last.len() - EOW.len());
        // A final unit that itself ends in the joiner would read back as a
        // continuation; split its last character off.
        if syms.last().is_some_and(|u| u.ends_with(JOINER)) {
            let mut last = syms.pop().unwrap();
            let tail = last.pop().unwrap();
            syms.push(last);
            syms.push(tail.to_string());
        }
        let n = syms.len();
        for u in &mut syms[..n - 1] {
            u.push_str(JOINER);
        }
        syms
    }

    pub fn apply(&self, s: &Sentence) -> Sentence {
        let tokens = s.tokens.iter().flat_map(|w| self.segment_word(w)).collect();
        Sentence::new(tokens, s.lang.clone())
    }

    /// Applies the model to many sentences, memoizing word segmentations.
    pub fn apply_all(&self, sentences: &[Sentence]) -> Vec<Sentence> {
        let mut cache: HashMap<&str, Vec<String>> = HashMap::new();
        sentences
            .iter()
            .map(|s| {
                let mut tokens = Vec::with_capacity(s.len() * 2);
                for w in &s.tokens {
                    let seg = cache.entry(w.as_str()).or_insert_with(|| self.segment_word(w));
                    tokens.extend(seg.iter().cloned());
                }
                Sentence::new(tokens, s.lang.clone())
            })
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let protected: Vec<&str> = self.protected().collect();
        writeln!(
            w,
            "#bpe v1 num_ops={} data_hash={} joiner={} protected={}",
            self.num_ops,
            self.data_hash,
            JOINER,
            protected.join("|")
        )?;
        for (a, b) in &self.merges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => return Err(Error::format("bpe model", 1, "missing header")),
        };
        let mut fields = header.split(' ');
        if fields.next() != Some("#bpe") || fields.next() != Some("v1") {
            return Err(Error::format("bpe model", 1, "expected '#bpe v1' header"));
        }
        let mut num_ops = None;
        let mut data_hash = String::new();
        let mut protected = Vec::new();
        for f in fields {
            match f.split_once('=') {
                Some(("num_ops", v)) => num_ops = v.parse().ok(),
                Some(("data_hash", v)) => data_hash = v.to_string(),
                Some(("joiner", v)) if v == JOINER => {}
                Some(("joiner", v)) => return Err(Error::format("bpe model", 1, format!("unsupported joiner {v:?}"))),
                Some(("protected", v)) => protected = v.split('|').filter(|t| !t.is_empty()).map(str::to_string).collect(),
                _ => return Err(Error::format("bpe model", 1, format!("unknown header field {f:?}"))),
            }
        }
        let num_ops = num_ops.ok_or_else(|| Error::format("bpe model", 1, "missing num_ops"))?;
        let mut merges = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in lines {
            let line = line.map_err(|_| Error::InvalidUtf8 { line: i + 1 })?;
            let Some((a, b)) = line.split_once(' ') else {
                return Err(Error::format("bpe model", i + 1, "expected 'left right'"));
            };
            if !seen.insert((a.to_string(), b.to_string())) {
                return Err(Error::format("bpe model", i + 1, "duplicate merge"));
            }
            merges.push((a.to_string(), b.to_string()));
        }
        if merges.len() > num_ops {
            return Err(Error::format("bpe model", 1, "more merges than num_ops"));
        }
        let mut model = BpeModel::from_merges(merges, num_ops, data_hash);
        model.protect(protected)?;
        Ok(model)
    }
}

/// Free-function alias of [`BpeModel::apply`].
pub fn apply_bpe(model: &BpeModel, s: &Sentence) -> Sentence {
    model.apply(s)
}

/// Joins subword units back into words.
pub fn merge_bpe(s: &Sentence) -> Result<Sentence> {
    let mut tokens = Vec::with_capacity(s.len());
    let mut word = String::new();
    for unit in &s.tokens {
        match unit.strip_suffix(JOINER) {
            Some(stem) => word.push_str(stem),
            None => {
                word.push_str(unit);
                tokens.push(std::mem::take(&mut word));
            }
        }
    }
    if !word.is_empty() || s.tokens.last().is_some_and(|u| u.ends_with(JOINER)) {
        return Err(Error::DanglingJoiner(s.tokens.last().cloned().unwrap_or_default()));
    }
    Ok(Sentence::new(tokens, s.lang.clone()))
}
