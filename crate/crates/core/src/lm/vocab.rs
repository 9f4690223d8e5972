use std::collections::{BTreeSet, HashMap};

use super::LmError;

pub const UNK: &str = "<unk>";
pub const EOS: &str = "<eos>";

/// Dense token ids. Id 0 is always `<unk>` and id 1 `<eos>`; the remaining
/// tokens follow in sorted order, so the mapping depends only on the set of
/// words seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u64>,
}

impl Vocabulary {
    pub fn from_corpus<S: AsRef<str>>(corpus: &[Vec<S>]) -> Self {
        let words: BTreeSet<&str> = corpus
            .iter()
            .flatten()
            .map(AsRef::as_ref)
            .filter(|w| *w != UNK && *w != EOS)
            .collect();
        let tokens = [UNK, EOS]
            .into_iter()
            .chain(words)
            .map(String::from)
            .collect();
        let mut vocab = Self::from_tokens(tokens).expect("reserved tokens present");
        for sentence in corpus {
            for token in sentence {
                let id = vocab.id(token.as_ref());
                vocab.counts[id as usize] += 1;
            }
        }
        vocab
    }

    /// Rebuilds a vocabulary from its id-ordered token list (counts are zero).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, LmError> {
        if tokens.first().map(String::as_str) != Some(UNK) || tokens.get(1).map(String::as_str) != Some(EOS) {
            return Err(LmError::Checkpoint(format!(
                "vocabulary must start with {UNK} and {EOS}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            if index.insert(token.clone(), i as u32).is_some() {
                return Err(LmError::Checkpoint(format!("duplicate vocabulary entry {token:?}")));
            }
        }
        let counts = vec![0; tokens.len()];
        Ok(Vocabulary { tokens, index, counts })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    pub fn eos_id(&self) -> u32 {
        1
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_and_counts() {
        let corpus = vec![vec!["b", "a"], vec!["a"]];
        let vocab = Vocabulary::from_corpus(&corpus);
        assert_eq!(vocab.tokens(), &["<unk>", "<eos>", "a", "b"]);
        assert_eq!(vocab.id("a"), 2);
        assert_eq!(vocab.id("zzz"), vocab.unk_id());
        assert_eq!(vocab.counts(), &[0, 0, 2, 1]);
    }

    #[test]
    fn from_tokens_rejects_bad_lists() {
        assert!(Vocabulary::from_tokens(vec!["a".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec![UNK.into(), EOS.into(), "a".into(), "a".into()]).is_err());
    }
}
