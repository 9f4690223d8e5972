//! Additive static-embedding baseline for the scope probe.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmbeddingError {
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse {value:?} as a number")]
    BadNumber { line: usize, value: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Word vectors of a fixed dimension, with a zero fallback for unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    fallback: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            fallback: vec![0.0; dim],
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim);
        self.vectors.insert(token.into(), vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> &[f64] {
        self.vectors.get(token).unwrap_or(&self.fallback)
    }

    /// Seeded random table, coordinates uniform in `[-1, 1]`. Words are
    /// visited in sorted order so the result depends only on the word set.
    pub fn random<S: AsRef<str>>(words: &[S], dim: usize, seed: u64) -> Self {
        let mut sorted: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
        sorted.sort_unstable();
        sorted.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = Self::new(dim);
        for word in sorted {
            let v = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            table.insert(word, v);
        }
        table
    }
}

/// Reads the whitespace-separated text format `token v1 v2 ... vd`. The
/// dimension is taken from the first non-blank line.
pub fn read_embedding_table<R: BufRead>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EmbeddingError::Io(e.to_string()))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| EmbeddingError::BadNumber {
                    line: i + 1,
                    value: f.to_string(),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let table = match table.as_mut() {
            Some(t) => t,
            None => {
                if values.is_empty() {
                    return Err(EmbeddingError::DimensionMismatch {
                        line: i + 1,
                        expected: 1,
                        found: 0,
                    });
                }
                table.insert(EmbeddingTable::new(values.len()))
            }
        };
        if values.len() != table.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: i + 1,
                expected: table.dim,
                found: values.len(),
            });
        }
        table.insert(token, values);
    }
    table.ok_or(EmbeddingError::EmptyFile)
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable, EmbeddingError> {
    let file = std::fs::File::open(path).map_err(|e| EmbeddingError::Io(format!("{}: {e}", path.display())))?;
    read_embedding_table(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Composition {
    /// Mean of the embeddings of tokens `0..=i`.
    #[default]
    PrefixMean,
    /// Embedding of token `i` alone.
    WordOnly,
}

/// One vector per position.
pub fn additive_prefix_repr<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable, mode: Composition) -> Vec<Vec<f64>> {
    let mut sum = vec![0.0; table.dim];
    tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            let v = table.get(token.as_ref());
            match mode {
                Composition::WordOnly => v.to_vec(),
                Composition::PrefixMean => {
                    sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                    let n = (i + 1) as f64;
                    sum.iter().map(|s| s / n).collect()
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_table() {
        let t = read_embedding_table("the 0.1 0.2 0.3\n".as_bytes()).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("the"), &[0.1, 0.2, 0.3]);
        assert_eq!(t.get("unknown"), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_reports_line() {
        let err = read_embedding_table("a 1 2 3\nb 1 2\n".as_bytes()).unwrap_err();
        assert_eq!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 3,
                found: 2
            }
        );
        assert_eq!(read_embedding_table("".as_bytes()).unwrap_err(), EmbeddingError::EmptyFile);
        assert_eq!(read_embedding_table("\n\n".as_bytes()).unwrap_err(), EmbeddingError::EmptyFile);
        assert!(matches!(
            read_embedding_table("a 1 x\n".as_bytes()),
            Err(EmbeddingError::BadNumber { line: 1, .. })
        ));
    }

    #[test]
    fn prefix_means() {
        let mut t = EmbeddingTable::new(2);
        t.insert("x", vec![1.0, 0.0]);
        t.insert("y", vec![0.0, 1.0]);
        let r = additive_prefix_repr(&["x"], &t, Composition::PrefixMean);
        assert_eq!(r, vec![vec![1.0, 0.0]]);
        let r = additive_prefix_repr(&["x", "y"], &t, Composition::PrefixMean);
        assert_eq!(r[1], vec![0.5, 0.5]);
        let r = additive_prefix_repr(&["x", "y"], &t, Composition::WordOnly);
        assert_eq!(r[1], vec![0.0, 1.0]);
        let r = additive_prefix_repr(&["x", "zzz"], &t, Composition::PrefixMean);
        assert_eq!(r[1], vec![0.5, 0.0]);
    }

    #[test]
    fn zero_table_gives_zero() {
        let t = EmbeddingTable::new(4);
        let r = additive_prefix_repr(&["a", "b", "c"], &t, Composition::PrefixMean);
        assert!(r.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn random_table_is_seeded() {
        let a = EmbeddingTable::random(&["b", "a", "b"], 5, 3);
        let b = EmbeddingTable::random(&["a", "b"], 5, 3);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert_ne!(a, EmbeddingTable::random(&["a", "b"], 5, 4));
    }
}
