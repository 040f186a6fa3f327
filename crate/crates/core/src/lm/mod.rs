//! N-gram language models and cross-entropy difference data selection.

mod ngram;
mod select;

pub use ngram::{cross_entropy, lm_from_counts, train_lm, train_lm_restricted, LmConfig, NgramLm, BOS, EOS, UNK};
pub use select::{ce_difference, select, write_selection, ScoredSentence, SelectionConfig};
