//! Negative polarity item licensing in LSTM language models: treebank
//! reading, construction extraction, minimal-pair rewriting, a small LSTM
//! language model, scope probing and result analysis.

pub mod analysis;
pub mod baseline;
pub mod extraction;
pub mod lm;
pub mod probe;
pub mod rewrite;
pub mod synthcorpus;
pub mod treebank;
