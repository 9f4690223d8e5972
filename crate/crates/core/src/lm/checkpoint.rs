//! Checkpoint file layout:
//!
//! ```text
//! NPILM1\n
//! <layers> <emb> <hidden> <vocab>\n
//! <parameters as little-endian f32, in LstmDims::blocks order>
//! <vocabulary, one token per line, in id order>
//! ```

use std::io::Write;

use super::network::{LstmDims, LstmWeights};
use super::vocab::Vocabulary;
use super::{LanguageModel, LmError};

pub const MAGIC: &str = "NPILM1";

pub fn write_checkpoint<W: Write>(model: &LanguageModel, mut out: W) -> Result<(), LmError> {
    let dims = model.weights.dims();
    let mut buf = Vec::with_capacity(64 + 4 * dims.param_count());
    buf.extend_from_slice(MAGIC.as_bytes());
    buf.push(b'\n');
    buf.extend_from_slice(format!("{} {} {} {}\n", dims.layers, dims.emb, dims.hidden, dims.vocab).as_bytes());
    for p in model.weights.params() {
        buf.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    for token in model.vocab.tokens() {
        buf.extend_from_slice(token.as_bytes());
        buf.push(b'\n');
    }
    out.write_all(&buf).map_err(|e| LmError::Io(e.to_string()))
}

fn take_line<'a>(bytes: &'a [u8], what: &str) -> Result<(&'a [u8], &'a [u8]), LmError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LmError::Checkpoint(format!("truncated {what}")))?;
    Ok((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<LanguageModel, LmError> {
    let (magic, rest) = take_line(bytes, "magic").map_err(|_| LmError::Checkpoint("bad magic".into()))?;
    if magic != MAGIC.as_bytes() {
        return Err(LmError::Checkpoint("bad magic".into()));
    }
    let (header, rest) = take_line(rest, "header")?;
    let header = std::str::from_utf8(header).map_err(|_| LmError::Checkpoint("header is not text".into()))?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| LmError::Checkpoint(format!("bad header {header:?}")))?;
    let [layers, emb, hidden, vocab] = fields[..] else {
        return Err(LmError::Checkpoint(format!("bad header {header:?}")));
    };
    let dims = LstmDims {
        layers,
        emb,
        hidden,
        vocab,
    };
    let n = dims.param_count();
    let payload_len = n
        .checked_mul(4)
        .ok_or_else(|| LmError::Checkpoint("header dims overflow".into()))?;
    if rest.len() < payload_len {
        return Err(LmError::Checkpoint(format!(
            "truncated payload: need {payload_len} bytes, have {}",
            rest.len()
        )));
    }
    let (payload, tail) = rest.split_at(payload_len);
    let params: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let weights = LstmWeights::from_params(dims, params)?;
    if !weights.is_finite() {
        return Err(LmError::Checkpoint("non-finite parameter".into()));
    }
    let text = std::str::from_utf8(tail).map_err(|_| LmError::Checkpoint("vocabulary is not UTF-8".into()))?;
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(LmError::Checkpoint("truncated vocabulary".into()));
    }
    let tokens: Vec<String> = text.lines().map(String::from).collect();
    if tokens.len() != vocab {
        return Err(LmError::Checkpoint(format!(
            "vocabulary has {} entries, header says {vocab}",
            tokens.len()
        )));
    }
    let vocab = Vocabulary::from_tokens(tokens)?;
    Ok(LanguageModel { weights, vocab })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> LanguageModel {
        let vocab = Vocabulary::from_corpus(&[vec!["a", "b", "c"]]);
        let dims = LstmDims {
            layers: 2,
            emb: 3,
            hidden: 4,
            vocab: vocab.len(),
        };
        let weights = LstmWeights::random(dims, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        LanguageModel { weights, vocab }
    }

    #[test]
    fn round_trip_rounds_to_f32() {
        let m = model();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"NPILM1\n2 3 4 5\n"));
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back.vocab.tokens(), m.vocab.tokens());
        for (a, b) in back.weights.params().iter().zip(m.weights.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let mut again = Vec::new();
        write_checkpoint(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let m = model();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() - 30]).is_err());
        assert!(read_checkpoint(&bytes[..40]).is_err());
        assert!(read_checkpoint(b"").is_err());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }
}
