//! Corpus BLEU and perplexity.
//!
//! BLEU follows the classic corpus-level definition: clipped n-gram matches
//! for n = 1..4 are summed over the corpus, their geometric mean is taken
//! without smoothing, and the brevity penalty compares total lengths.
//! Text is split by [`bleu_tokenize`], an approximation of the common
//! international evaluation tokenizer, so absolute scores may differ from
//! external scorers by small margins.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;

use crate::corpus::ParallelCorpus;
use crate::error::{Error, Result};
use crate::nmt::{corpus_perplexity, ModelParams};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct BleuScore {
    /// 0..=100.
    pub bleu: f64,
    /// Modified n-gram precisions as fractions.
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuScore {
    pub const TSV_HEADER: &'static str = "bleu\tp1\tp2\tp3\tp4\tbp\thyp_len\tref_len";

    pub fn tsv_row(&self) -> String {
        let p = self.precisions;
        format!(
            "{:.4}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            self.bleu, p[0], p[1], p[2], p[3], self.brevity_penalty, self.hyp_len, self.ref_len
        )
    }
}

impl fmt::Display for BleuScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions.map(|x| x * 100.0);
        write!(
            f,
            "BLEU = {:.2} ({:.1}/{:.1}/{:.1}/{:.1}, BP={:.3}, hyp_len={}, ref_len={})",
            self.bleu, p[0], p[1], p[2], p[3], self.brevity_penalty, self.hyp_len, self.ref_len
        )
    }
}

fn is_split_symbol(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | '!'..='&' | '('..='+' | ':'..='@' | '/')
}

/// Evaluation tokenizer: decodes the four common XML entities, splits off
/// ASCII symbols, splits `.` and `,` unless they sit between digits, and
/// splits `-` after a digit.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    let text = text
        .replace("&quot;", "\"")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&");
    let chars: Vec<char> = text.chars().collect();
    let digit = |i: Option<usize>| i.and_then(|i| chars.get(i)).is_some_and(|c| c.is_ascii_digit());
    let mut out = String::with_capacity(text.len() * 2);
    for (i, &c) in chars.iter().enumerate() {
        let prev = i.checked_sub(1);
        let split = match c {
            '.' | ',' => !(digit(prev) && digit(Some(i + 1))),
            '-' => digit(prev),
            _ => is_split_symbol(c),
        };
        if split {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

#[derive(Default, Clone, Copy)]
struct Stats {
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

fn sentence_stats(hyp: &str, reference: &str, lowercase: bool) -> Stats {
    let prep = |s: &str| if lowercase { bleu_tokenize(&s.to_lowercase()) } else { bleu_tokenize(s) };
    let (h, r) = (prep(hyp), prep(reference));
    let mut st = Stats {
        hyp_len: h.len(),
        ref_len: r.len(),
        ..Stats::default()
    };
    for n in 1..=MAX_ORDER {
        let rc = ngram_counts(&r, n);
        st.totals[n - 1] = h.len().saturating_sub(n - 1);
        st.matches[n - 1] = ngram_counts(&h, n)
            .iter()
            .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
    }
    st
}

/// Corpus BLEU of `hyps` against single references.
pub fn bleu<H: AsRef<str> + Sync, R: AsRef<str> + Sync>(hyps: &[H], refs: &[R], lowercase: bool) -> Result<BleuScore> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::Empty("BLEU corpus"));
    }
    let per: Vec<Stats> = hyps
        .par_iter()
        .zip(refs.par_iter())
        .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref(), lowercase))
        .collect();
    let mut st = Stats::default();
    for s in &per {
        for n in 0..MAX_ORDER {
            st.matches[n] += s.matches[n];
            st.totals[n] += s.totals[n];
        }
        st.hyp_len += s.hyp_len;
        st.ref_len += s.ref_len;
    }
    let precisions: [f64; MAX_ORDER] =
        std::array::from_fn(|n| if st.totals[n] == 0 { 0.0 } else { st.matches[n] as f64 / st.totals[n] as f64 });
    let brevity_penalty = if st.hyp_len == 0 {
        0.0
    } else if st.hyp_len < st.ref_len {
        (1.0 - st.ref_len as f64 / st.hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuScore {
        bleu,
        precisions,
        matches: st.matches,
        totals: st.totals,
        brevity_penalty,
        hyp_len: st.hyp_len,
        ref_len: st.ref_len,
    })
}

/// `exp` of the mean per-token NLL of `corpus`, dropout off.
pub fn perplexity(params: &ModelParams, corpus: &ParallelCorpus) -> Result<f64> {
    corpus_perplexity(params, corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer() {
        assert_eq!(bleu_tokenize("Hello, world."), ["Hello", ",", "world", "."]);
        assert_eq!(bleu_tokenize("3.14 and 1,000"), ["3.14", "and", "1,000"]);
        assert_eq!(bleu_tokenize("well-known 1990-2000"), ["well-known", "1990", "-", "2000"]);
        assert_eq!(bleu_tokenize("a &quot;b&quot; (c)"), ["a", "\"", "b", "\"", "(", "c", ")"]);
        assert_eq!(bleu_tokenize("don't"), ["don't"]);
    }

    #[test]
    fn identity_is_100() {
        let s = ["the cat sat on the mat", "a b c d e"];
        let b = bleu(&s, &s, true).unwrap();
        assert_eq!(b.bleu, 100.0);
        assert_eq!(b.precisions, [1.0; 4]);
        assert_eq!(b.brevity_penalty, 1.0);
        assert_eq!(b.to_string(), "BLEU = 100.00 (100.0/100.0/100.0/100.0, BP=1.000, hyp_len=11, ref_len=11)");
    }

    #[test]
    fn clipped_unigram_precision() {
        let b = bleu(&["the the the the"], &["the cat sat down"], true).unwrap();
        assert_eq!(b.matches[0], 1);
        assert_eq!(b.precisions[0], 0.25);
        assert_eq!(b.bleu, 0.0);
    }

    #[test]
    fn brevity_penalty_closed_form() {
        let r = "a b c d e f g h i j";
        let b = bleu(&["a b c d e"], &[r], true).unwrap();
        assert_eq!(b.precisions, [1.0; 4]);
        assert!((b.brevity_penalty - (-1.0f64).exp()).abs() < 1e-9);
        assert!((b.bleu - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(bleu(&["a"], &["a", "b"], true), Err(Error::LengthMismatch { hyps: 1, refs: 2 })));
        assert!(bleu::<&str, &str>(&[], &[], true).is_err());
        let b = bleu(&[""], &["a b"], true).unwrap();
        assert_eq!(b.bleu, 0.0);
    }

    fn corpus() -> impl Strategy<Value = Vec<(String, String)>> {
        let word = prop::sample::select(vec!["the", "The", "cat", "CAT", "sat", "on", "mat", ".", ","]);
        let sent = prop::collection::vec(word, 0..8).prop_map(|w| w.join(" "));
        prop::collection::vec((sent.clone(), sent), 1..12)
    }

    proptest! {
        #[test]
        fn order_invariant(pairs in corpus(), seed in any::<u64>()) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let mut idx: Vec<usize> = (0..pairs.len()).collect();
            let mut state = seed;
            for i in (1..idx.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (state >> 33) as usize % (i + 1));
            }
            let hp: Vec<&String> = idx.iter().map(|&i| &h[i]).collect();
            let rp: Vec<&String> = idx.iter().map(|&i| &r[i]).collect();
            let a = bleu(&h, &r, true).unwrap();
            let b = bleu(&hp, &rp, true).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn case_invariant(pairs in corpus()) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let hu: Vec<String> = h.iter().map(|s| s.to_uppercase()).collect();
            let rl: Vec<String> = r.iter().map(|s| s.to_lowercase()).collect();
            prop_assert_eq!(bleu(&h, &r, true).unwrap(), bleu(&hu, &rl, true).unwrap());
        }

        #[test]
        fn score_is_bp_times_geomean(pairs in corpus()) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let b = bleu(&h, &r, true).unwrap();
            prop_assert!((0.0..=100.0).contains(&b.bleu));
            let geo = b.precisions.iter().product::<f64>().powf(0.25);
            prop_assert!((b.bleu - 100.0 * b.brevity_penalty * geo).abs() < 1e-9);
        }
    }
}
