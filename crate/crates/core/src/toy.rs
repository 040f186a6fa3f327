//! Synthetic language pair for end-to-end runs.
//!
//! Each language has its own syllable alphabet and a small lexicon; a random
//! bijection maps L1 words to L2 words and an L2 sentence is the mapped L1
//! sentence in reverse order. Two domains draw words from Zipf distributions
//! over different rank orders, so the in-domain parallel data and the mixed
//! monolingual pools differ the way a seed corpus and a web crawl do.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::text::{Lang, Sentence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyConfig {
    pub seed: u64,
    pub l1: Lang,
    pub l2: Lang,
    /// Words per language.
    pub lexicon_size: usize,
    pub real_pairs: usize,
    pub dev_pairs: usize,
    pub test_pairs: usize,
    /// Monolingual sentences per language.
    pub mono_size: usize,
    /// Share of monolingual sentences drawn from the in-domain distribution.
    pub mono_in_domain: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub zipf_exponent: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            seed: 1,
            l1: Lang::from("xa"),
            l2: Lang::from("xb"),
            lexicon_size: 50,
            real_pairs: 2000,
            dev_pairs: 200,
            test_pairs: 200,
            mono_size: 20_000,
            mono_in_domain: 0.3,
            min_len: 4,
            max_len: 9,
            zipf_exponent: 1.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyData {
    pub lexicon: Vec<(String, String)>,
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub mono_l1: Vec<Sentence>,
    pub mono_l2: Vec<Sentence>,
}

const L1_ONSETS: &[&str] = &["p", "t", "k", "m", "n", "s", "l", "f"];
const L1_VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const L2_ONSETS: &[&str] = &["b", "d", "g", "r", "v", "z", "h", "j", "w"];
const L2_VOWELS: &[&str] = &["y", "ae", "oe", "aa", "ei"];

fn lexicon(rng: &mut ChaCha8Rng, onsets: &[&str], vowels: &[&str], n: usize) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(1..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", onsets.choose(rng).unwrap(), vowels.choose(rng).unwrap()))
            .collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

struct Zipf {
    cdf: Vec<f64>,
    order: Vec<usize>,
}

impl Zipf {
    fn new(n: usize, s: f64, order: Vec<usize>) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=n)
            .map(|r| {
                acc += 1.0 / (r as f64).powf(s);
                acc
            })
            .collect();
        cdf.iter_mut().for_each(|x| *x /= acc);
        Zipf { cdf, order }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.gen();
        let rank = self.cdf.partition_point(|&c| c < u).min(self.cdf.len() - 1);
        self.order[rank]
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lexicon_size < 2 || self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("toy needs ≥ 2 words and 1 ≤ min_len ≤ max_len".into()));
        }
        if self.real_pairs == 0 || self.dev_pairs == 0 || self.test_pairs == 0 {
            return Err(Error::Config("toy splits must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.mono_in_domain) {
            return Err(Error::Config("mono_in_domain must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Maps an L1 sentence to its L2 image.
pub fn translate_l1(lexicon: &[(String, String)], s: &[String]) -> Vec<String> {
    s.iter()
        .rev()
        .map(|w| lexicon.iter().find(|(a, _)| a == w).map(|(_, b)| b.clone()).expect("word in lexicon"))
        .collect()
}

pub fn generate(cfg: &ToyConfig) -> Result<ToyData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.lexicon_size;
    let w1 = lexicon(&mut rng, L1_ONSETS, L1_VOWELS, n);
    let mut w2 = lexicon(&mut rng, L2_ONSETS, L2_VOWELS, n);
    w2.shuffle(&mut rng);
    let lex: Vec<(String, String)> = w1.into_iter().zip(w2).collect();
    let mut in_order: Vec<usize> = (0..n).collect();
    in_order.shuffle(&mut rng);
    let mut gen_order = in_order.clone();
    gen_order.shuffle(&mut rng);
    let in_domain = Zipf::new(n, cfg.zipf_exponent, in_order);
    let general = Zipf::new(n, cfg.zipf_exponent, gen_order);

    let sample = |rng: &mut ChaCha8Rng, z: &Zipf| -> Vec<usize> {
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        (0..len).map(|_| z.sample(rng)).collect()
    };
    let l1_sent = |ids: &[usize]| Sentence::new(ids.iter().map(|&i| lex[i].0.clone()).collect(), cfg.l1.clone());
    let l2_sent = |ids: &[usize]| Sentence::new(ids.iter().rev().map(|&i| lex[i].1.clone()).collect(), cfg.l2.clone());

    let parallel = |rng: &mut ChaCha8Rng, count: usize| {
        let pairs = (0..count)
            .map(|_| {
                let ids = sample(rng, &in_domain);
                (l1_sent(&ids), l2_sent(&ids))
            })
            .collect();
        ParallelCorpus::from_real(cfg.l1.clone(), cfg.l2.clone(), pairs)
    };
    let train = parallel(&mut rng, cfg.real_pairs);
    let dev = parallel(&mut rng, cfg.dev_pairs);
    let test = parallel(&mut rng, cfg.test_pairs);

    let mono = |rng: &mut ChaCha8Rng, l2: bool| -> Vec<Sentence> {
        (0..cfg.mono_size)
            .map(|_| {
                let z = if rng.gen::<f64>() < cfg.mono_in_domain { &in_domain } else { &general };
                let ids = sample(rng, z);
                if l2 { l2_sent(&ids) } else { l1_sent(&ids) }
            })
            .collect()
    };
    let mono_l1 = mono(&mut rng, false);
    let mono_l2 = mono(&mut rng, true);
    Ok(ToyData {
        lexicon: lex,
        train,
        dev,
        test,
        mono_l1,
        mono_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure() {
        let cfg = ToyConfig {
            mono_size: 100,
            ..ToyConfig::default()
        };
        let d = generate(&cfg).unwrap();
        assert_eq!(d.train.len(), 2000);
        assert_eq!(d.mono_l1.len(), 100);
        let l1: std::collections::HashSet<_> = d.lexicon.iter().map(|x| &x.0).collect();
        let l2: std::collections::HashSet<_> = d.lexicon.iter().map(|x| &x.1).collect();
        assert_eq!((l1.len(), l2.len()), (50, 50));
        for p in &d.train.pairs {
            assert_eq!(translate_l1(&d.lexicon, &p.source.tokens), p.target.tokens);
            assert!((4..=9).contains(&p.source.len()));
        }
        assert!(d.mono_l2.iter().all(|s| s.tokens.iter().all(|t| l2.contains(t))));
        let again = generate(&cfg).unwrap();
        assert_eq!(again.train, d.train);
        assert_eq!(again.mono_l2, d.mono_l2);
    }
}
