//! Sentence-level scores derived from per-token log probabilities.

use super::network::{run_state, LstmState, LstmWeights, ScoredSentence};
use super::vocab::Vocabulary;
use super::LmError;

fn check_position(s: &ScoredSentence, position: usize) -> Result<(), LmError> {
    if position < s.len() {
        Ok(())
    } else {
        Err(LmError::PositionOutOfRange {
            position,
            len: s.len(),
        })
    }
}

/// `exp(-mean log P)` over positions `0..=upto`.
pub fn prefix_perplexity(s: &ScoredSentence, upto: usize) -> Result<f64, LmError> {
    check_position(s, upto)?;
    let sum: f64 = s.log_probs[..=upto].iter().sum();
    Ok((-sum / (upto + 1) as f64).exp())
}

/// Perplexity of the whole sentence.
pub fn perplexity(s: &ScoredSentence) -> Result<f64, LmError> {
    if s.is_empty() {
        return Err(LmError::EmptySentence);
    }
    prefix_perplexity(s, s.len() - 1)
}

/// Probability of the token at `item` given everything before it.
pub fn conditional_probability(s: &ScoredSentence, item: usize) -> Result<f64, LmError> {
    check_position(s, item)?;
    Ok(s.log_probs[item].exp())
}

/// Add-one smoothed unigram distribution over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Unigram {
    probs: Vec<f64>,
}

impl Unigram {
    pub fn prob(&self, id: u32) -> f64 {
        self.probs[id as usize]
    }

    pub fn log_prob(&self, id: u32) -> f64 {
        self.probs[id as usize].ln()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Maximum-likelihood unigram with add-one smoothing. Out-of-vocabulary
/// tokens count towards `<unk>`.
pub fn fit_unigram<S: AsRef<str>>(corpus: &[Vec<S>], vocab: &Vocabulary) -> Result<Unigram, LmError> {
    let mut counts = vec![0u64; vocab.len()];
    let mut total = 0u64;
    for sentence in corpus {
        for token in sentence {
            counts[vocab.id(token.as_ref()) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(LmError::EmptyCorpus);
    }
    let denom = (total + vocab.len() as u64) as f64;
    Ok(Unigram {
        probs: counts.iter().map(|&c| (c + 1) as f64 / denom).collect(),
    })
}

/// Syntactic log-odds ratio: `(log P_lm - log P_unigram) / length`.
pub fn slor(s: &ScoredSentence, uni: &Unigram) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let lm: f64 = s.log_probs.iter().sum();
    let unigram: f64 = s.ids.iter().map(|&id| uni.log_prob(id)).sum();
    (lm - unigram) / s.len() as f64
}

/// State reached at the end of a sentence (after its `<eos>`), starting
/// from zero. This is the state the model carries into the next sentence
/// during training.
pub fn sentence_final_state(w: &LstmWeights, ids: &[u32], eos: u32) -> Result<LstmState, LmError> {
    let state = run_state(w, &LstmState::zeros(w.dims()), ids)?;
    run_state(w, &state, &[eos])
}

/// Element-wise mean of the final `(h, c)` of every sentence.
pub fn average_init_state(w: &LstmWeights, corpus: &[Vec<u32>], eos: u32) -> Result<LstmState, LmError> {
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let dims = w.dims();
    let mut mean = LstmState::zeros(dims);
    for ids in corpus {
        let end = sentence_final_state(w, ids, eos)?;
        for (acc, layer) in mean.layers.iter_mut().zip(&end.layers) {
            acc.h.iter_mut().zip(&layer.h).for_each(|(a, v)| *a += v);
            acc.c.iter_mut().zip(&layer.c).for_each(|(a, v)| *a += v);
        }
    }
    let n = corpus.len() as f64;
    for layer in mean.layers.iter_mut() {
        layer.h.iter_mut().chain(layer.c.iter_mut()).for_each(|v| *v /= n);
    }
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(log_probs: Vec<f64>) -> ScoredSentence {
        ScoredSentence {
            ids: vec![2; log_probs.len()],
            hidden: vec![vec![]; log_probs.len()],
            log_probs,
            distributions: None,
        }
    }

    #[test]
    fn hand_perplexity() {
        let s = scored(vec![0.5f64.ln(), 0.25f64.ln()]);
        assert!((prefix_perplexity(&s, 1).unwrap() - 8f64.sqrt()).abs() < 1e-12);
        assert!((prefix_perplexity(&s, 0).unwrap() - 2.0).abs() < 1e-12);
        assert!(prefix_perplexity(&s, 2).is_err());
        assert!((conditional_probability(&s, 1).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unigram_counts() {
        let vocab = Vocabulary::from_corpus(&[vec!["a", "a", "b"]]);
        let uni = fit_unigram(&[vec!["a", "a", "b"]], &vocab).unwrap();
        assert!((uni.prob(vocab.id("a")) - 3.0 / 7.0).abs() < 1e-15);
        assert!((uni.prob(vocab.id("b")) - 2.0 / 7.0).abs() < 1e-15);
        assert!((uni.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let empty: Vec<Vec<&str>> = vec![vec![]];
        assert!(matches!(fit_unigram(&empty, &vocab), Err(LmError::EmptyCorpus)));
    }

    #[test]
    fn hand_slor() {
        let vocab = Vocabulary::from_corpus(&[vec!["a", "b"]]);
        let uni = Unigram {
            probs: vec![0.25; vocab.len()],
        };
        let s = scored(vec![0.5f64.ln()]);
        assert!((slor(&s, &uni) - 2f64.ln()).abs() < 1e-12);
    }
}
