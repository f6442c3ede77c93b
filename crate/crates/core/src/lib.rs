//! Task-aware vocabulary adaptation for subword tokenizers.
//!
//! The crate grows a pretrained model vocabulary with domain subwords chosen
//! by a fragment-score driven grid search, and ships the corpus analytics and
//! summarization metrics used to judge the result:
//!
//! * [`tokenizer`]: vocabularies for the wordpiece, bpe and unigram families,
//!   longest-match and minimal-piece segmentation, and a pair-merge trainer.
//! * [`corpus`]: JSONL ingestion, word frequencies, OOV and overlap statistics,
//!   decontamination and training-split cleaning.
//! * [`concepts`]: a character 3-gram cosine concept matcher backed by a TSV
//!   term dictionary.
//! * [`adapt`]: candidate subword generation, the (A, K) grid search with
//!   margin selection, the threshold baseline and the equal-size comparison.
//! * [`metrics`]: Rouge-N/L/W/SU, bootstrap aggregation, concept-aware Rouge
//!   and concept F1.

pub mod adapt;
pub mod concepts;
pub mod corpus;
mod error;
pub mod fixed;
pub mod metrics;
pub mod text;
pub mod tokenizer;

pub use error::{Error, Result};
