use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ngram::{cross_entropy, NgramLm};
use crate::error::{Error, Result};
use crate::text::Sentence;

/// How much monolingual data to select: `k` times the real parallel size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    /// Number of real parallel pairs.
    pub n_real: usize,
    /// Multiplier, at least 1.
    pub k: usize,
}

impl SelectionConfig {
    pub fn count(&self) -> usize {
        self.k * self.n_real
    }

    pub fn validate(&self, pool_size: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("selection multiplier k must be at least 1".into()));
        }
        if self.count() > pool_size {
            return Err(Error::PoolTooSmall {
                requested: self.count(),
                available: pool_size,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    /// Index of the sentence in the pool it was selected from.
    pub index: usize,
    pub h_in: f64,
    pub h_out: f64,
    pub score: f64,
}

fn check_compatible(lm_in: &NgramLm, lm_out: &NgramLm) -> Result<()> {
    let (a, b) = (lm_in.config(), lm_out.config());
    if a.order != b.order || a.epsilon != b.epsilon || a.eos_event != b.eos_event {
        return Err(Error::IncompatibleLm(format!(
            "order/epsilon/eos conventions differ: {a:?} vs {b:?}"
        )));
    }
    if !lm_in.vocab().eq(lm_out.vocab()) {
        return Err(Error::IncompatibleLm(
            "the general-domain model must be trained with the in-domain vocabulary".into(),
        ));
    }
    Ok(())
}

fn score(lm_in: &NgramLm, lm_out: &NgramLm, s: &Sentence, index: usize) -> Result<ScoredSentence> {
    let h_in = cross_entropy(lm_in, s)?;
    let h_out = cross_entropy(lm_out, s)?;
    Ok(ScoredSentence {
        sentence: s.clone(),
        index,
        h_in,
        h_out,
        score: h_in - h_out,
    })
}

/// `H_in(s) − H_out(s)`; smaller means more in-domain-like.
pub fn ce_difference(lm_in: &NgramLm, lm_out: &NgramLm, s: &Sentence) -> Result<f64> {
    check_compatible(lm_in, lm_out)?;
    Ok(cross_entropy(lm_in, s)? - cross_entropy(lm_out, s)?)
}

/// The `count` pool sentences with the smallest cross-entropy difference,
/// ascending, ties in pool order.
pub fn select(pool: &[Sentence], lm_in: &NgramLm, lm_out: &NgramLm, count: usize) -> Result<Vec<ScoredSentence>> {
    if count > pool.len() {
        return Err(Error::PoolTooSmall {
            requested: count,
            available: pool.len(),
        });
    }
    check_compatible(lm_in, lm_out)?;
    let mut scored: Vec<ScoredSentence> = pool
        .par_iter()
        .enumerate()
        .map(|(i, s)| score(lm_in, lm_out, s, i))
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| a.score.total_cmp(&b.score));
    scored.truncate(count);
    Ok(scored)
}

/// `score TAB h_in TAB h_out TAB sentence` lines.
pub fn write_selection(selected: &[ScoredSentence]) -> String {
    let mut out = String::new();
    for s in selected {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.score, s.h_in, s.h_out, s.sentence.text()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{lm_from_counts, train_lm, train_lm_restricted, LmConfig};
    use crate::text::Lang;

    fn sent(s: &str) -> Sentence {
        Sentence::from_line(s, Lang::from("x"))
    }

    fn opposed_unigrams() -> (NgramLm, NgramLm) {
        let cfg = LmConfig {
            order: 1,
            epsilon: 0.0,
            eos_event: false,
            ..Default::default()
        };
        let lm_in = lm_from_counts(&cfg, ["a", "b"], [(vec!["a"], 9), (vec!["b"], 1)]).unwrap();
        let lm_out = lm_from_counts(&cfg, ["a", "b"], [(vec!["a"], 1), (vec!["b"], 9)]).unwrap();
        (lm_in, lm_out)
    }

    #[test]
    fn opposed_unigram_scores() {
        let (lm_in, lm_out) = opposed_unigrams();
        let a = ce_difference(&lm_in, &lm_out, &sent("a")).unwrap();
        let b = ce_difference(&lm_in, &lm_out, &sent("b")).unwrap();
        assert!((a + 9f64.ln()).abs() < 1e-12);
        assert!((b - 9f64.ln()).abs() < 1e-12);
        assert!((ce_difference(&lm_out, &lm_in, &sent("a")).unwrap() + a).abs() < 1e-15);
        assert_eq!(ce_difference(&lm_in, &lm_in, &sent("a b b")).unwrap(), 0.0);
    }

    #[test]
    fn select_orders_ascending() {
        let (lm_in, lm_out) = opposed_unigrams();
        let pool = vec![sent("b"), sent("a b"), sent("a")];
        let top = select(&pool, &lm_in, &lm_out, 1).unwrap();
        assert_eq!(top[0].sentence, sent("a"));
        let all = select(&pool, &lm_in, &lm_out, 3).unwrap();
        let order: Vec<usize> = all.iter().map(|s| s.index).collect();
        assert_eq!(order, [2, 1, 0]);
        assert!(all.iter().all(|s| s.score == s.h_in - s.h_out));
    }

    #[test]
    fn ties_keep_pool_order() {
        let (lm_in, lm_out) = opposed_unigrams();
        let pool = vec![sent("a b"), sent("b a"), sent("a b")];
        let idx: Vec<usize> = select(&pool, &lm_in, &lm_out, 3).unwrap().iter().map(|s| s.index).collect();
        assert_eq!(idx, [0, 1, 2]);
    }

    #[test]
    fn too_large_count_names_sizes() {
        let (lm_in, lm_out) = opposed_unigrams();
        let err = select(&[sent("a")], &lm_in, &lm_out, 2).unwrap_err();
        assert!(matches!(err, Error::PoolTooSmall { requested: 2, available: 1 }));
        assert!(err.to_string().contains('2') && err.to_string().contains('1'));
    }

    #[test]
    fn incompatible_models_are_rejected() {
        let a = train_lm(&[sent("a b")], &LmConfig::default()).unwrap();
        let b = train_lm(&[sent("a c")], &LmConfig::default()).unwrap();
        assert!(matches!(ce_difference(&a, &b, &sent("a")), Err(Error::IncompatibleLm(_))));
        let b = train_lm_restricted(&[sent("a c")], &LmConfig::default(), &a).unwrap();
        assert!(ce_difference(&a, &b, &sent("a")).is_ok());
    }

    #[test]
    fn selection_tsv() {
        let (lm_in, lm_out) = opposed_unigrams();
        let sel = select(&[sent("a")], &lm_in, &lm_out, 1).unwrap();
        let line = write_selection(&sel);
        let cols: Vec<&str> = line.trim_end().split('\t').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[3], "a");
        assert!((cols[0].parse::<f64>().unwrap() + 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn selection_config_bounds() {
        let cfg = SelectionConfig { n_real: 10, k: 3 };
        assert_eq!(cfg.count(), 30);
        assert!(cfg.validate(30).is_ok());
        assert!(cfg.validate(29).is_err());
        assert!(SelectionConfig { n_real: 10, k: 0 }.validate(100).is_err());
    }
}
