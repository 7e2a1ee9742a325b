//! Phrase-based soft forced decoding for reranking translation candidates.
//!
//! The pipeline:
//!
//! 1. [`corpus`] reads a word-aligned parallel corpus, counts how often each
//!    word is left unaligned and extracts consistent phrase pairs.
//! 2. [`phrase_table`] holds the resulting rules, scored by the product of
//!    direct and inverse phrase translation probabilities.
//! 3. [`decoder`] runs soft forced decoding: the best phrase-based path that
//!    produces exactly a given candidate, with word insertion and deletion
//!    rules so that a path always exists.
//! 4. [`rerank`] combines that score with the upstream model score and a
//!    word penalty, tunes the weights against BLEU and reorders n-best lists.
//! 5. [`sampler`] builds diverse candidate lists from any next-token scorer.

pub mod corpus;
pub mod decoder;
mod error;
pub mod phrase_table;
pub mod rerank;
pub mod sampler;
mod span;

pub use error::{Error, Result};
pub use span::Span;
