//! Desk-scale training: Adam on mean next-token cross-entropy with full
//! back-propagation through each training sequence.
//!
//! Sentences are visited in a seeded shuffled order and grouped `chain` at a
//! time into one sequence `s1 <eos> s2 <eos> ..`, run from the zero state.
//! With the default of two, every other sentence starts from the state some
//! sentence reaches after its `<eos>`, the states that
//! [`average_init_state`](super::average_init_state) averages for scoring.
//! Gradients flow through that starting state, so it cannot drift into
//! saturation the way a detached carried state can.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{sequence_gradient, GradWorkspace, LstmDims, LstmState, LstmWeights};
use super::vocab::Vocabulary;
use super::{LanguageModel, LmError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub layers: usize,
    pub emb: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub init_scale: f64,
    /// Sentences per training sequence.
    pub chain: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 2,
            emb: 32,
            hidden: 64,
            learning_rate: 0.005,
            epochs: 10,
            batch_size: 16,
            clip_norm: 5.0,
            init_scale: 0.1,
            chain: 2,
            seed: 1,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let lr = self.lr * c2.sqrt() / c1;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            params[i] -= lr * self.m[i] / (self.v[i].sqrt() + Self::EPS);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LanguageModel,
    /// Mean per-token cross-entropy (nats) of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh model on `corpus`. The vocabulary is built from the
/// corpus. Deterministic for a fixed `config.seed`.
pub fn train_lm<S: AsRef<str>>(corpus: &[Vec<S>], config: &TrainConfig) -> Result<TrainOutcome, LmError> {
    let sentences: Vec<&Vec<S>> = corpus.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    if config.batch_size == 0 || config.chain == 0 {
        return Err(LmError::InvalidDims("batch_size and chain must be positive".into()));
    }
    let vocab = Vocabulary::from_corpus(corpus);
    let encoded: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode(s)).collect();
    let dims = LstmDims {
        layers: config.layers,
        emb: config.emb,
        hidden: config.hidden,
        vocab: vocab.len(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = LstmWeights::random(dims, config.init_scale, &mut rng);

    let eos = vocab.eos_id();
    let n_params = dims.param_count();
    let mut adam = Adam::new(n_params, config.learning_rate);
    let mut grad = vec![0.0; n_params];
    let mut ws = GradWorkspace::default();
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    let zero = LstmState::zeros(dims);
    let mut inputs = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut targets = Vec::new();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0usize;
        for batch in order.chunks(config.batch_size) {
            let batch_tokens: usize = batch.iter().map(|&i| encoded[i].len() + 1).sum();
            let scale = 1.0 / batch_tokens as f64;
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for group in batch.chunks(config.chain) {
                inputs.clear();
                for (j, &i) in group.iter().enumerate() {
                    if j > 0 {
                        inputs.push(eos);
                    }
                    inputs.extend_from_slice(&encoded[i]);
                }
                targets.clear();
                targets.extend_from_slice(&inputs);
                targets.push(eos);
                let (loss, _) = sequence_gradient(&weights, &zero, &inputs, &targets, scale, &mut grad, &mut ws)?;
                batch_loss += loss;
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LmError::DivergenceDetected { epoch });
            }
            clip(&mut grad, config.clip_norm);
            adam.update(weights.params_mut(), &grad);
            epoch_loss += batch_loss;
            epoch_tokens += batch_tokens;
        }
        let mean = epoch_loss / epoch_tokens as f64;
        if !mean.is_finite() || !weights.is_finite() {
            return Err(LmError::DivergenceDetected { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.4}");
        epoch_losses.push(mean);
    }

    Ok(TrainOutcome {
        model: LanguageModel { weights, vocab },
        epoch_losses,
    })
}
