//! LSTM language model built from scratch: training, per-token scoring,
//! perplexity and conditional probability, SLOR, hidden-state extraction
//! and averaged final-state initialisation.
//!
//! Natural logarithms are used throughout; perplexity is base e.

mod checkpoint;
mod network;
mod score;
mod train;
mod vocab;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, MAGIC};
pub use network::{
    forward, forward_full, log_softmax, lstm_step, output_logits, run_state, sequence_gradient, GradWorkspace,
    LayerState, LstmDims, LstmState, LstmWeights, ScoredSentence,
};
pub use score::{
    average_init_state, conditional_probability, fit_unigram, perplexity, prefix_perplexity, sentence_final_state,
    slor, Unigram,
};
pub use train::{train_lm, TrainConfig, TrainOutcome};
pub use vocab::{Vocabulary, EOS, UNK};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training diverged in epoch {epoch}")]
    DivergenceDetected { epoch: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("position {position} out of range for sentence of {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Weights together with the vocabulary they were trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub weights: LstmWeights,
    pub vocab: Vocabulary,
}

impl LanguageModel {
    pub fn zero_state(&self) -> LstmState {
        LstmState::zeros(self.weights.dims())
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        self.vocab.encode(tokens)
    }

    /// Scores a token sequence; unknown words map to `<unk>`.
    pub fn score<S: AsRef<str>>(&self, init: &LstmState, tokens: &[S]) -> Result<ScoredSentence, LmError> {
        forward(&self.weights, init, &self.encode(tokens))
    }

    pub fn average_init_state<S: AsRef<str>>(&self, corpus: &[Vec<S>]) -> Result<LstmState, LmError> {
        let encoded: Vec<Vec<u32>> = corpus.iter().map(|s| self.encode(s)).collect();
        average_init_state(&self.weights, &encoded, self.vocab.eos_id())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_checkpoint(self, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        read_checkpoint(bytes)
    }
}
