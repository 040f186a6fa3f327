//! Bi-directional neural machine translation with back-translation.
//!
//! The modules follow the pipeline: [`text`] preprocessing, [`subword`]
//! segmentation, [`lm`] data selection, [`corpus`] recipes, the [`nmt`]
//! model, [`eval`] scoring, and the [`cycle`] that fine-tunes on
//! back-translated data. [`experiment`] runs a whole configured study and
//! [`toy`] generates a synthetic language pair for it.

pub mod artifact;
pub mod corpus;
pub mod cycle;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod lm;
pub mod nmt;
pub mod subword;
pub mod text;
pub mod toy;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/bpe.md")]
    mod bpe {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/recipes.md")]
    mod recipes {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/cycle.md")]
    mod cycle {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/reference.md")]
    mod reference {}
}
