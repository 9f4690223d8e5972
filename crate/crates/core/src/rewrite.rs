//! The four experimental conditions for each construction: the original
//! sentence, the sentence without its licensor, and both of those with the
//! NPI swapped for its positive counterpart.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{LicensedConstruction, Lexicon, LicensorRewrite};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("token {token:?} at {index} is not a licensor")]
    NotALicensor { index: usize, token: String },
    #[error("token {token:?} at {index} is not an NPI")]
    NotAnNpi { index: usize, token: String },
    #[error("{0:?} has no positive counterpart")]
    NoPpiCounterpart(String),
    #[error("index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Condition {
    NpiNeg,
    NpiPos,
    PpiNeg,
    PpiPos,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::NpiNeg,
        Condition::NpiPos,
        Condition::PpiNeg,
        Condition::PpiPos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::NpiNeg => "NPI_NEG",
            Condition::NpiPos => "NPI_POS",
            Condition::PpiNeg => "PPI_NEG",
            Condition::PpiPos => "PPI_POS",
        }
    }

    pub fn is_negative(self) -> bool {
        matches!(self, Condition::NpiNeg | Condition::PpiNeg)
    }

    pub fn uses_ppi(self) -> bool {
        matches!(self, Condition::PpiNeg | Condition::PpiPos)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionVariant {
    pub condition: Condition,
    /// Empty when `valid` is false.
    pub tokens: Vec<String>,
    pub item_index: usize,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteSet {
    pub source: LicensedConstruction,
    /// In `Condition::ALL` order.
    pub variants: [ConditionVariant; 4],
}

impl RewriteSet {
    pub fn variant(&self, condition: Condition) -> &ConditionVariant {
        &self.variants[condition as usize]
    }
}

/// Gives `replacement` the case of `template`'s first letter.
fn match_case(template: &str, replacement: &str) -> String {
    let upper = template.chars().next().is_some_and(char::is_uppercase);
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) if upper => first.to_uppercase().chain(chars).collect(),
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Removes or rewrites the licensor. Returns the new tokens and the shift
/// applied to every position after the licensor.
pub fn remove_licensor<S: AsRef<str>>(
    tokens: &[S],
    licensor_index: usize,
    lex: &Lexicon,
) -> Result<(Vec<String>, isize), RewriteError> {
    let token = tokens
        .get(licensor_index)
        .ok_or(RewriteError::IndexOutOfRange {
            index: licensor_index,
            len: tokens.len(),
        })?
        .as_ref();
    let rule = lex
        .licensor_rewrite(token)
        .ok_or_else(|| RewriteError::NotALicensor {
            index: licensor_index,
            token: token.to_string(),
        })?;
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    match rule {
        LicensorRewrite::Remove => {
            out.remove(licensor_index);
            Ok((out, -1))
        }
        LicensorRewrite::Replace(word) => {
            out[licensor_index] = match_case(token, word);
            Ok((out, 0))
        }
    }
}

/// Replaces the NPI at `npi_index` by its positive counterpart.
pub fn swap_to_ppi<S: AsRef<str>>(
    tokens: &[S],
    npi_index: usize,
    lex: &Lexicon,
) -> Result<Vec<String>, RewriteError> {
    let token = tokens
        .get(npi_index)
        .ok_or(RewriteError::IndexOutOfRange {
            index: npi_index,
            len: tokens.len(),
        })?
        .as_ref();
    if !lex.is_npi(token) {
        return Err(RewriteError::NotAnNpi {
            index: npi_index,
            token: token.to_string(),
        });
    }
    let ppi = lex
        .ppi_for(token)
        .ok_or_else(|| RewriteError::NoPpiCounterpart(token.to_string()))?;
    let mut out: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
    out[npi_index] = match_case(token, ppi);
    Ok(out)
}

pub fn build_rewrite_set(c: &LicensedConstruction, lex: &Lexicon) -> Result<RewriteSet, RewriteError> {
    let (positive, shift) = remove_licensor(&c.tokens, c.licensor_index, lex)?;
    let shifted = if c.npi_index > c.licensor_index {
        c.npi_index.checked_add_signed(shift).expect("npi index after licensor")
    } else {
        c.npi_index
    };

    let npi_neg = ConditionVariant {
        condition: Condition::NpiNeg,
        tokens: c.tokens.clone(),
        item_index: c.npi_index,
        valid: true,
    };
    // Checked here so that a non-NPI item is an error rather than a silently
    // invalid variant.
    if !lex.is_npi(c.npi()) {
        return Err(RewriteError::NotAnNpi {
            index: c.npi_index,
            token: c.npi().to_string(),
        });
    }
    let npi_pos = ConditionVariant {
        condition: Condition::NpiPos,
        tokens: positive.clone(),
        item_index: shifted,
        valid: true,
    };

    let ppi_variant = |condition, tokens: &[String], item_index| match swap_to_ppi(tokens, item_index, lex) {
        Ok(tokens) => Ok(ConditionVariant {
            condition,
            tokens,
            item_index,
            valid: true,
        }),
        Err(RewriteError::NoPpiCounterpart(_)) => Ok(ConditionVariant {
            condition,
            tokens: Vec::new(),
            item_index,
            valid: false,
        }),
        Err(e) => Err(e),
    };
    let ppi_neg = ppi_variant(Condition::PpiNeg, &c.tokens, c.npi_index)?;
    let ppi_pos = ppi_variant(Condition::PpiPos, &positive, shifted)?;

    Ok(RewriteSet {
        source: c.clone(),
        variants: [npi_neg, npi_pos, ppi_neg, ppi_pos],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Span;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn construction(sentence: &str, licensor_index: usize, npi_index: usize) -> LicensedConstruction {
        let tokens = toks(sentence);
        let end = tokens.len();
        LicensedConstruction {
            sentence_id: 0,
            tokens,
            licensor_index,
            npi_index,
            scope: Span::new(licensor_index + 1, end),
            pattern_id: 1,
            distance: npi_index - licensor_index,
        }
    }

    #[test]
    fn remove_not() {
        let lex = Lexicon::default();
        let (out, shift) = remove_licensor(&toks("Bill did not buy any books"), 2, &lex).unwrap();
        assert_eq!(out, toks("Bill did buy any books"));
        assert_eq!(shift, -1);
    }

    #[test]
    fn nobody_becomes_everybody_with_case() {
        let lex = Lexicon::default();
        let (out, shift) = remove_licensor(&toks("Nobody came"), 0, &lex).unwrap();
        assert_eq!(out, toks("Everybody came"));
        assert_eq!(shift, 0);
        let (out, _) = remove_licensor(&toks("I saw nobody"), 2, &lex).unwrap();
        assert_eq!(out[2], "everybody");
    }

    #[test]
    fn not_a_licensor() {
        let lex = Lexicon::default();
        assert!(matches!(
            remove_licensor(&toks("He left"), 1, &lex),
            Err(RewriteError::NotALicensor { index: 1, .. })
        ));
        assert!(matches!(
            remove_licensor(&toks("He left"), 5, &lex),
            Err(RewriteError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn swaps() {
        let lex = Lexicon::default();
        assert_eq!(swap_to_ppi(&toks("x any y"), 1, &lex).unwrap(), toks("x some y"));
        assert_eq!(swap_to_ppi(&toks("x anything"), 1, &lex).unwrap(), toks("x something"));
        assert_eq!(swap_to_ppi(&toks("Anywhere"), 0, &lex).unwrap(), toks("Somewhere"));
        assert_eq!(
            swap_to_ppi(&toks("x anymore"), 1, &lex),
            Err(RewriteError::NoPpiCounterpart("anymore".into()))
        );
    }

    #[test]
    fn four_conditions() {
        let lex = Lexicon::default();
        let set = build_rewrite_set(&construction("Bill did not buy any books", 2, 4), &lex).unwrap();
        let text = |c| set.variant(c).tokens.join(" ");
        assert_eq!(text(Condition::NpiNeg), "Bill did not buy any books");
        assert_eq!(text(Condition::NpiPos), "Bill did buy any books");
        assert_eq!(text(Condition::PpiNeg), "Bill did not buy some books");
        assert_eq!(text(Condition::PpiPos), "Bill did buy some books");
        assert_eq!(set.variant(Condition::NpiPos).item_index, 3);
        assert_eq!(set.variant(Condition::PpiPos).tokens[3], "some");
        assert_eq!(set.variant(Condition::NpiNeg).tokens, set.source.tokens);
    }

    #[test]
    fn anymore_invalidates_ppi() {
        let lex = Lexicon::default();
        let set = build_rewrite_set(&construction("I do n't go there anymore", 2, 5), &lex).unwrap();
        assert!(set.variant(Condition::NpiNeg).valid);
        assert!(set.variant(Condition::NpiPos).valid);
        assert!(!set.variant(Condition::PpiNeg).valid);
        assert!(!set.variant(Condition::PpiPos).valid);
    }

    #[test]
    fn condition_names() {
        for c in Condition::ALL {
            assert_eq!(c.as_str().parse::<Condition>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.as_str()));
        }
    }
}
