use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Sentence;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;
const FIRST_WORD_ID: u32 = 3;

/// Smoothing and event conventions of an [`NgramLm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    /// Interpolation weights, unigram first. Empty means uniform.
    pub lambdas: Vec<f64>,
    /// Probability mass spread uniformly over the whole event space; this
    /// is what unknown words receive.
    pub epsilon: f64,
    /// Whether `</s>` is a predicted event (and counts toward per-token
    /// normalization).
    pub eos_event: bool,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 3,
            lambdas: Vec::new(),
            epsilon: 0.01,
            eos_event: true,
        }
    }
}

impl LmConfig {
    pub fn with_order(order: usize) -> Self {
        LmConfig {
            order,
            ..Default::default()
        }
    }

    fn resolved(&self) -> Result<Self> {
        if self.order == 0 {
            return Err(Error::Config("LM order must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("LM epsilon {} outside [0, 1)", self.epsilon)));
        }
        let lambdas = if self.lambdas.is_empty() {
            vec![1.0 / self.order as f64; self.order]
        } else {
            self.lambdas.clone()
        };
        let sum: f64 = lambdas.iter().sum();
        if lambdas.len() != self.order || lambdas.iter().any(|&l| l < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "LM lambdas {lambdas:?} must be {} non-negative weights summing to 1",
                self.order
            )));
        }
        Ok(LmConfig {
            lambdas,
            ..self.clone()
        })
    }
}

/// Jelinek-Mercer interpolated n-gram model with a uniform floor.
///
/// For an event `w` after history `h`:
///
/// ```text
/// P(w | h) = ε / |E| + (1 − ε) · Σ_i λ'_i · c(h_i, w) / c(h_i)
/// ```
///
/// where `h_i` is the last `i − 1` tokens of `h`, `E` is the event space
/// (vocabulary, `<unk>`, and `</s>` when it is an event) and `λ'` are the
/// weights renormalized over the orders whose history was observed. The
/// unigram history is always observed, so every distribution sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramLm {
    config: LmConfig,
    /// id → symbol; ids 0..3 are `<s>`, `</s>`, `<unk>`.
    symbols: Vec<String>,
    ids: HashMap<String, u32>,
    /// `counts[i]` holds (history of length i, event) counts.
    counts: Vec<HashMap<Vec<u32>, u64>>,
    /// `history_counts[i]` sums `counts[i]` over events.
    history_counts: Vec<HashMap<Vec<u32>, u64>>,
}

impl NgramLm {
    fn empty(config: LmConfig, words: BTreeSet<String>) -> Self {
        let mut symbols = vec![BOS.to_string(), EOS.to_string(), UNK.to_string()];
        symbols.extend(words.into_iter().filter(|w| w != BOS && w != EOS && w != UNK));
        let ids = symbols.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        let order = config.order;
        NgramLm {
            config,
            symbols,
            ids,
            counts: vec![HashMap::new(); order],
            history_counts: vec![HashMap::new(); order],
        }
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn order(&self) -> usize {
        self.config.order
    }

    /// Word types, excluding the boundary and unknown symbols.
    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.symbols[FIRST_WORD_ID as usize..].iter().map(String::as_str)
    }

    /// Size of the event space `E`.
    pub fn event_space(&self) -> usize {
        self.symbols.len() - FIRST_WORD_ID as usize + 1 + usize::from(self.config.eos_event)
    }

    /// Event ids the model can predict, in id order.
    pub fn events(&self) -> Vec<u32> {
        let mut e: Vec<u32> = Vec::with_capacity(self.event_space());
        if self.config.eos_event {
            e.push(EOS_ID);
        }
        e.push(UNK_ID);
        e.extend(FIRST_WORD_ID..self.symbols.len() as u32);
        e
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn symbol(&self, id: u32) -> &str {
        &self.symbols[id as usize]
    }

    /// Ids of the events of `s`, preceded by `order − 1` `<s>` paddings.
    fn padded(&self, s: &Sentence) -> Vec<u32> {
        let mut seq = vec![BOS_ID; self.order() - 1];
        seq.extend(s.tokens.iter().map(|t| self.id(t)));
        if self.config.eos_event {
            seq.push(EOS_ID);
        }
        seq
    }

    fn add_sentence(&mut self, s: &Sentence) {
        let seq = self.padded(s);
        let n = self.order();
        for pos in n - 1..seq.len() {
            for hist_len in 0..n {
                let gram = seq[pos - hist_len..=pos].to_vec();
                let hist = gram[..hist_len].to_vec();
                *self.counts[hist_len].entry(gram).or_default() += 1;
                *self.history_counts[hist_len].entry(hist).or_default() += 1;
            }
        }
    }

    /// `P(event | history)`; `history` holds the preceding ids, oldest first.
    pub fn prob(&self, history: &[u32], event: u32) -> f64 {
        let n = self.order();
        let lambdas = &self.config.lambdas;
        let mut mixed = 0.0;
        let mut weight = 0.0;
        for hist_len in 0..n {
            if hist_len > history.len() {
                break;
            }
            let hist = &history[history.len() - hist_len..];
            let Some(&total) = self.history_counts[hist_len].get(hist) else {
                continue;
            };
            let mut gram = hist.to_vec();
            gram.push(event);
            let c = self.counts[hist_len].get(&gram).copied().unwrap_or(0);
            mixed += lambdas[hist_len] * c as f64 / total as f64;
            weight += lambdas[hist_len];
        }
        let ml = if weight > 0.0 { mixed / weight } else { 0.0 };
        let eps = self.config.epsilon;
        eps / self.event_space() as f64 + (1.0 - eps) * ml
    }

    /// Token-level probabilities of the events of `s`, in order.
    pub fn event_log_probs(&self, s: &Sentence) -> Vec<f64> {
        let seq = self.padded(s);
        let n = self.order();
        (n - 1..seq.len())
            .map(|pos| self.prob(&seq[pos + 1 - n..pos], seq[pos]).ln())
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "#ngram-lm v1")?;
        writeln!(w, "order\t{}", self.order())?;
        let lambdas: Vec<String> = self.config.lambdas.iter().map(|l| l.to_string()).collect();
        writeln!(w, "lambdas\t{}", lambdas.join(" "))?;
        writeln!(w, "epsilon\t{}", self.config.epsilon)?;
        writeln!(w, "eos_event\t{}", self.config.eos_event)?;
        writeln!(w, "vocab_size\t{}", self.event_space())?;
        writeln!(w, "\\vocab")?;
        for v in self.vocab() {
            writeln!(w, "{v}")?;
        }
        for (hist_len, table) in self.counts.iter().enumerate() {
            writeln!(w, "\\{}-grams", hist_len + 1)?;
            let mut rows: Vec<(Vec<&str>, u64)> = table
                .iter()
                .map(|(g, &c)| (g.iter().map(|&id| self.symbol(id)).collect(), c))
                .collect();
            rows.sort();
            for (g, c) in rows {
                writeln!(w, "{c}\t{}", g.join(" "))?;
            }
        }
        writeln!(w, "\\end")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::format("n-gram LM", line, msg.to_string());
        let lines: Vec<String> = r
            .lines()
            .enumerate()
            .map(|(i, l)| l.map_err(|_| Error::InvalidUtf8 { line: i + 1 }))
            .collect::<Result<_>>()?;
        if lines.first().map(String::as_str) != Some("#ngram-lm v1") {
            return Err(bad(1, "expected '#ngram-lm v1' header"));
        }
        let field = |idx: usize, key: &str| -> Result<&str> {
            lines
                .get(idx)
                .and_then(|l| l.strip_prefix(key))
                .and_then(|l| l.strip_prefix('\t'))
                .ok_or_else(|| bad(idx + 1, &format!("expected {key}")))
        };
        let order: usize = field(1, "order")?.parse().map_err(|_| bad(2, "bad order"))?;
        let lambdas = field(2, "lambdas")?
            .split(' ')
            .map(|x| x.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(3, "bad lambdas"))?;
        let epsilon: f64 = field(3, "epsilon")?.parse().map_err(|_| bad(4, "bad epsilon"))?;
        let eos_event: bool = field(4, "eos_event")?.parse().map_err(|_| bad(5, "bad eos_event"))?;
        let vocab_size: usize = field(5, "vocab_size")?.parse().map_err(|_| bad(6, "bad vocab_size"))?;
        let config = LmConfig {
            order,
            lambdas,
            epsilon,
            eos_event,
        }
        .resolved()?;
        if lines.get(6).map(String::as_str) != Some("\\vocab") {
            return Err(bad(7, "expected \\vocab"));
        }
        let mut i = 7;
        let mut words = BTreeSet::new();
        while i < lines.len() && !lines[i].starts_with('\\') {
            words.insert(lines[i].clone());
            i += 1;
        }
        let mut lm = NgramLm::empty(config, words);
        if lm.event_space() != vocab_size {
            return Err(bad(6, "vocab_size does not match the vocabulary"));
        }
        for hist_len in 0..order {
            if lines.get(i).map(String::as_str) != Some(format!("\\{}-grams", hist_len + 1).as_str()) {
                return Err(bad(i + 1, &format!("expected \\{}-grams", hist_len + 1)));
            }
            i += 1;
            while i < lines.len() && !lines[i].starts_with('\\') {
                let (c, g) = lines[i].split_once('\t').ok_or_else(|| bad(i + 1, "expected count TAB n-gram"))?;
                let c: u64 = c.parse().map_err(|_| bad(i + 1, "bad count"))?;
                let gram: Vec<u32> = g
                    .split(' ')
                    .map(|t| lm.ids.get(t).copied().ok_or_else(|| bad(i + 1, "n-gram token not in vocabulary")))
                    .collect::<Result<_>>()?;
                if gram.len() != hist_len + 1 {
                    return Err(bad(i + 1, "wrong n-gram length"));
                }
                *lm.history_counts[hist_len].entry(gram[..hist_len].to_vec()).or_default() += c;
                lm.counts[hist_len].insert(gram, c);
                i += 1;
            }
        }
        if lines.get(i).map(String::as_str) != Some("\\end") {
            return Err(bad(i + 1, "expected \\end"));
        }
        Ok(lm)
    }
}

/// Trains an order-`config.order` model on `corpus`.
pub fn train_lm(corpus: &[Sentence], config: &LmConfig) -> Result<NgramLm> {
    if corpus.is_empty() {
        return Err(Error::Empty("LM training corpus"));
    }
    let config = config.resolved()?;
    let words: BTreeSet<String> = corpus.iter().flat_map(|s| s.tokens.iter().cloned()).collect();
    let mut lm = NgramLm::empty(config, words);
    for s in corpus {
        lm.add_sentence(s);
    }
    Ok(lm)
}

/// Trains on `corpus` with the vocabulary of `reference`: other tokens are
/// counted as `<unk>`, and the event space equals the reference's.
pub fn train_lm_restricted(corpus: &[Sentence], config: &LmConfig, reference: &NgramLm) -> Result<NgramLm> {
    if corpus.is_empty() {
        return Err(Error::Empty("LM training corpus"));
    }
    let config = config.resolved()?;
    let words: BTreeSet<String> = reference.vocab().map(str::to_string).collect();
    let mut lm = NgramLm::empty(config, words);
    for s in corpus {
        lm.add_sentence(s);
    }
    Ok(lm)
}

/// Builds a model directly from n-gram counts (`gram` = history then event).
pub fn lm_from_counts<'a>(
    config: &LmConfig,
    vocab: impl IntoIterator<Item = &'a str>,
    grams: impl IntoIterator<Item = (Vec<&'a str>, u64)>,
) -> Result<NgramLm> {
    let config = config.resolved()?;
    let mut lm = NgramLm::empty(config, vocab.into_iter().map(str::to_string).collect());
    for (g, c) in grams {
        if g.is_empty() || g.len() > lm.order() {
            return Err(Error::Config(format!("n-gram {g:?} does not fit order {}", lm.order())));
        }
        let ids: Vec<u32> = g.iter().map(|t| lm.id(t)).collect();
        let hist_len = ids.len() - 1;
        *lm.history_counts[hist_len].entry(ids[..hist_len].to_vec()).or_default() += c;
        *lm.counts[hist_len].entry(ids).or_default() += c;
    }
    Ok(lm)
}

/// Per-event cross-entropy in nats: `−(1/N) Σ ln P(e_i | history)`.
pub fn cross_entropy(lm: &NgramLm, s: &Sentence) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("sentence for cross-entropy"));
    }
    let lp = lm.event_log_probs(s);
    Ok(-lp.iter().sum::<f64>() / lp.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Lang;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sent(s: &str) -> Sentence {
        Sentence::from_line(s, Lang::from("x"))
    }

    #[test]
    fn unigram_closed_form() {
        let cfg = LmConfig {
            order: 1,
            epsilon: 0.01,
            ..Default::default()
        };
        let lm = train_lm(&[sent("a a b")], &cfg).unwrap();
        // events a, a, b, </s>; event space {a, b, <unk>, </s>}
        let pa = lm.prob(&[], lm.id("a"));
        assert!((pa - (0.99 * 2.0 / 4.0 + 0.01 / 4.0)).abs() < 1e-15);
        let pu = lm.prob(&[], lm.id("zzz"));
        assert!((pu - 0.01 / 4.0).abs() < 1e-15);
        // order 1: history is ignored
        assert_eq!(lm.prob(&[lm.id("b")], lm.id("a")), pa);
    }

    #[test]
    fn cross_entropy_by_brute_force_product() {
        let cfg = LmConfig {
            order: 2,
            lambdas: vec![0.4, 0.6],
            epsilon: 0.05,
            eos_event: true,
        };
        let lm = train_lm(&[sent("a b"), sent("b b a")], &cfg).unwrap();
        // Hand tables: unigram events a:2 b:3 </s>:2 (7 total); |E| = 4.
        // bigram histories: <s>:{a:1,b:1}, a:{b:1,</s>:1}, b:{b:1,a:1,</s>:1}
        let p = |uni: f64, bi: f64| 0.05 / 4.0 + 0.95 * (0.4 * uni + 0.6 * bi);
        // sentence "b a": P(b|<s>) P(a|b) P(</s>|a)
        let expected = -((p(3.0 / 7.0, 0.5)).ln() + p(2.0 / 7.0, 1.0 / 3.0).ln() + p(2.0 / 7.0, 0.5).ln()) / 3.0;
        let h = cross_entropy(&lm, &sent("b a")).unwrap();
        assert!((h - expected).abs() < 1e-12, "{h} vs {expected}");
    }

    #[test]
    fn deterministic_lm_has_zero_entropy() {
        let cfg = LmConfig {
            order: 1,
            epsilon: 0.0,
            eos_event: false,
            ..Default::default()
        };
        let lm = train_lm(&[sent("a a a")], &cfg).unwrap();
        assert_eq!(cross_entropy(&lm, &sent("a a")).unwrap(), 0.0);
    }

    #[test]
    fn uniform_unigram_entropy_is_log_v() {
        // Four equiprobable word events; with ε = 0 and no </s> event,
        // <unk> carries no mass.
        let cfg = LmConfig {
            order: 1,
            epsilon: 0.0,
            eos_event: false,
            ..Default::default()
        };
        let lm = lm_from_counts(
            &cfg,
            ["a", "b", "c", "d"],
            [(vec!["a"], 1), (vec!["b"], 1), (vec!["c"], 1), (vec!["d"], 1)],
        )
        .unwrap();
        let h = cross_entropy(&lm, &sent("a c d d b")).unwrap();
        assert!((h - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(train_lm(&[], &LmConfig::default()).is_err());
        let lm = train_lm(&[sent("a")], &LmConfig::default()).unwrap();
        assert!(cross_entropy(&lm, &sent("")).is_err());
        assert!(train_lm(&[sent("a")], &LmConfig::with_order(0)).is_err());
    }

    #[test]
    fn restricted_training_uses_reference_vocab() {
        let in_lm = train_lm(&[sent("a b")], &LmConfig::default()).unwrap();
        let out_lm = train_lm_restricted(&[sent("a c d")], &LmConfig::default(), &in_lm).unwrap();
        assert_eq!(out_lm.vocab().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(out_lm.event_space(), in_lm.event_space());
        // c and d were counted as <unk>
        assert!(out_lm.prob(&[], out_lm.id("<unk>")) > out_lm.prob(&[], out_lm.id("b")));
    }

    #[test]
    fn file_round_trip() {
        let lm = train_lm(&[sent("a b c"), sent("c b")], &LmConfig::default()).unwrap();
        let mut buf = Vec::new();
        lm.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("vocab_size\t5\n"));
        let back = NgramLm::read_from(&buf[..]).unwrap();
        assert_eq!(back, lm);
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(corpus in prop::collection::vec("[a-d]( [a-d]){0,6}", 1..6),
                                   order in 1usize..4, seed in 0u64..1000) {
            let corpus: Vec<Sentence> = corpus.iter().map(|s| sent(s)).collect();
            let lm = train_lm(&corpus, &LmConfig::with_order(order)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ids: Vec<u32> = (0..lm.symbols.len() as u32).collect();
            for _ in 0..5 {
                let hist: Vec<u32> = (0..order - 1).map(|_| ids[rng.gen_range(0..ids.len())]).collect();
                let total: f64 = lm.events().iter().map(|&e| lm.prob(&hist, e)).sum();
                prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
            }
        }

        #[test]
        fn entropy_is_non_negative(corpus in prop::collection::vec("[a-c]( [a-c]){0,5}", 1..5),
                                   probe in "[a-e]( [a-e]){0,5}") {
            let corpus: Vec<Sentence> = corpus.iter().map(|s| sent(s)).collect();
            let lm = train_lm(&corpus, &LmConfig::default()).unwrap();
            prop_assert!(cross_entropy(&lm, &sent(&probe)).unwrap() >= 0.0);
        }
    }
}
