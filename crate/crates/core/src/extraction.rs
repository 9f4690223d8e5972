//! NPI construction extraction.
//!
//! Sentences are first filtered on surface form (an *any*-variant and a
//! negative licensor must both occur), then the parse tree is searched for
//! one of six licensing configurations. Each configuration places the
//! licensor in a child slot of some node, immediately followed by the
//! constituent that forms its scope:
//!
//! | id | parent     | before licensor | scope                         |
//! |----|------------|-----------------|-------------------------------|
//! | 1  | verb group | verb group      | verb group                    |
//! | 2  | verb group | modal           | verb group                    |
//! | 3  | verb group | verb group      | NP, PP or ADJP                |
//! | 4  | verb group | NP              | verb group                    |
//! | 5  | clause     | anything        | S or SBAR                     |
//! | 6  | anything   | anything        | optional NP/PP, then ADVP     |
//!
//! The licensor slot is recognised by its token alone, so a nominal
//! licensor such as *nobody* fits any slot a negative adverb would.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::treebank::{LabelClass, ParseTree, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LicensorRewrite {
    Remove,
    Replace(String),
}

/// Lexical items involved in NPI licensing. All entries are lowercase and
/// lookups are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub npi_variants: BTreeSet<String>,
    pub licensors: BTreeSet<String>,
    pub ppi_map: BTreeMap<String, String>,
    pub licensor_rewrites: BTreeMap<String, LicensorRewrite>,
}

impl Default for Lexicon {
    fn default() -> Self {
        let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        let npi_variants = set(&[
            "any", "anybody", "anyone", "anymore", "anything", "anytime", "anywhere",
        ]);
        let licensors = set(&["not", "n't", "never", "nobody"]);
        let ppi_map = [
            ("any", "some"),
            ("anybody", "somebody"),
            ("anyone", "someone"),
            ("anything", "something"),
            ("anytime", "sometime"),
            ("anywhere", "somewhere"),
        ]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
        let licensor_rewrites = [
            ("not", LicensorRewrite::Remove),
            ("n't", LicensorRewrite::Remove),
            ("never", LicensorRewrite::Remove),
            ("nobody", LicensorRewrite::Replace("everybody".to_string())),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Lexicon {
            npi_variants,
            licensors,
            ppi_map,
            licensor_rewrites,
        }
    }
}

impl Lexicon {
    pub fn is_npi(&self, token: &str) -> bool {
        self.npi_variants.contains(&token.to_lowercase())
    }

    pub fn is_licensor(&self, token: &str) -> bool {
        self.licensors.contains(&token.to_lowercase())
    }

    pub fn is_ppi(&self, token: &str) -> bool {
        let lower = token.to_lowercase();
        self.ppi_map.values().any(|p| *p == lower)
    }

    pub fn ppi_for(&self, npi: &str) -> Option<&str> {
        self.ppi_map.get(&npi.to_lowercase()).map(String::as_str)
    }

    pub fn npi_for(&self, ppi: &str) -> Option<&str> {
        let lower = ppi.to_lowercase();
        self.ppi_map
            .iter()
            .find(|(_, p)| **p == lower)
            .map(|(n, _)| n.as_str())
    }

    pub fn licensor_rewrite(&self, licensor: &str) -> Option<&LicensorRewrite> {
        self.licensor_rewrites.get(&licensor.to_lowercase())
    }

    /// Every word the lexicon can produce or recognise, including rewrite
    /// targets.
    pub fn all_words(&self) -> BTreeSet<String> {
        let mut words: BTreeSet<String> = self.npi_variants.iter().cloned().collect();
        words.extend(self.licensors.iter().cloned());
        words.extend(self.ppi_map.values().cloned());
        for rewrite in self.licensor_rewrites.values() {
            if let LicensorRewrite::Replace(word) = rewrite {
                words.insert(word.clone());
            }
        }
        words
    }
}

/// One licensor/NPI pair found in a sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "ConstructionRecord", into = "ConstructionRecord")]
pub struct LicensedConstruction {
    pub sentence_id: usize,
    pub tokens: Vec<String>,
    pub licensor_index: usize,
    pub npi_index: usize,
    pub scope: Span,
    pub pattern_id: u8,
    pub distance: usize,
}

impl LicensedConstruction {
    pub fn licensor(&self) -> &str {
        &self.tokens[self.licensor_index]
    }

    pub fn npi(&self) -> &str {
        &self.tokens[self.npi_index]
    }
}

#[derive(Serialize, Deserialize)]
struct ConstructionRecord {
    sentence_id: usize,
    tokens: Vec<String>,
    licensor_index: usize,
    npi_index: usize,
    scope_start: usize,
    scope_end: usize,
    pattern_id: u8,
    distance: usize,
}

impl From<ConstructionRecord> for LicensedConstruction {
    fn from(r: ConstructionRecord) -> Self {
        LicensedConstruction {
            sentence_id: r.sentence_id,
            tokens: r.tokens,
            licensor_index: r.licensor_index,
            npi_index: r.npi_index,
            scope: Span::new(r.scope_start, r.scope_end.max(r.scope_start)),
            pattern_id: r.pattern_id,
            distance: r.distance,
        }
    }
}

impl From<LicensedConstruction> for ConstructionRecord {
    fn from(c: LicensedConstruction) -> Self {
        ConstructionRecord {
            sentence_id: c.sentence_id,
            tokens: c.tokens,
            licensor_index: c.licensor_index,
            npi_index: c.npi_index,
            scope_start: c.scope.start,
            scope_end: c.scope.end,
            pattern_id: c.pattern_id,
            distance: c.distance,
        }
    }
}

/// True iff the sentence has at least one NPI variant and one licensor.
pub fn surface_prefilter<S: AsRef<str>>(tokens: &[S], lex: &Lexicon) -> bool {
    let has_npi = tokens.iter().any(|t| lex.is_npi(t.as_ref()));
    has_npi && tokens.iter().any(|t| lex.is_licensor(t.as_ref()))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    licensor_index: usize,
    scope: Span,
    pattern_id: u8,
}

fn is_class(node: Option<&ParseTree>, classes: &[LabelClass]) -> bool {
    node.is_some_and(|n| classes.contains(&n.label_class()))
}

/// Licensing configurations whose licensor sits at `children[k]`.
fn candidates_at(parent: &ParseTree, k: usize, out: &mut Vec<Candidate>) {
    use LabelClass::*;
    let children = &parent.children;
    let licensor_index = children[k].span.start;
    let before = k.checked_sub(1).map(|i| &children[i]);
    let after = children.get(k + 1);
    let after2 = children.get(k + 2);
    let parent_class = parent.label_class();
    let mut push = |pattern_id: u8, scope: Span| {
        out.push(Candidate {
            licensor_index,
            scope,
            pattern_id,
        })
    };

    if parent_class == VerbGroup {
        if is_class(before, &[VerbGroup]) && is_class(after, &[VerbGroup]) {
            push(1, after.unwrap().span);
        }
        if is_class(before, &[Modal]) && is_class(after, &[VerbGroup]) {
            push(2, after.unwrap().span);
        }
        if is_class(before, &[VerbGroup]) && is_class(after, &[NounPhrase, PrepPhrase, AdjPhrase]) {
            push(3, after.unwrap().span);
        }
        if is_class(before, &[NounPhrase]) && is_class(after, &[VerbGroup]) {
            push(4, after.unwrap().span);
        }
    }
    if parent_class == Clause && is_class(after, &[Clause, Subclause]) {
        push(5, after.unwrap().span);
    }
    if is_class(after, &[NounPhrase, PrepPhrase]) && is_class(after2, &[AdvPhrase]) {
        push(6, Span::new(after.unwrap().span.start, after2.unwrap().span.end));
    } else if is_class(after, &[AdvPhrase]) {
        push(6, after.unwrap().span);
    }
}

/// Finds every licensed NPI in `tree`. For each NPI occurrence only the
/// innermost match is kept: smallest scope, then lowest pattern id, then
/// the licensor closest to the NPI.
pub fn match_patterns(tree: &ParseTree, lex: &Lexicon) -> Vec<LicensedConstruction> {
    let tokens = tree.leaves();
    let mut candidates = Vec::new();
    for node in tree.nodes().filter(|n| !n.is_leaf()) {
        for (k, child) in node.children.iter().enumerate() {
            if child.single_token().is_some_and(|t| lex.is_licensor(t)) {
                candidates_at(node, k, &mut candidates);
            }
        }
    }

    let mut best: BTreeMap<usize, Candidate> = BTreeMap::new();
    for cand in candidates {
        for npi_index in cand.scope.start..cand.scope.end {
            if !lex.is_npi(&tokens[npi_index]) || npi_index <= cand.licensor_index {
                continue;
            }
            let key = |c: &Candidate| (c.scope.len(), c.pattern_id, npi_index - c.licensor_index);
            match best.get(&npi_index) {
                Some(current) if key(current) <= key(&cand) => {}
                _ => {
                    best.insert(npi_index, cand);
                }
            }
        }
    }

    best.into_iter()
        .map(|(npi_index, c)| LicensedConstruction {
            sentence_id: 0,
            tokens: tokens.clone(),
            licensor_index: c.licensor_index,
            npi_index,
            scope: c.scope,
            pattern_id: c.pattern_id,
            distance: npi_index - c.licensor_index,
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExtractionSummary {
    pub constructions: Vec<LicensedConstruction>,
    pub sentences: usize,
    pub prefiltered: usize,
    /// Sentences that passed the surface filter but matched no pattern.
    pub dropped: usize,
}

/// Runs prefilter and pattern matching over a corpus. Sentence ids are the
/// tree indices.
pub fn extract_corpus(trees: &[ParseTree], lex: &Lexicon) -> ExtractionSummary {
    let mut summary = ExtractionSummary {
        sentences: trees.len(),
        ..Default::default()
    };
    for (sentence_id, tree) in trees.iter().enumerate() {
        let tokens = tree.leaves();
        if !surface_prefilter(&tokens, lex) {
            continue;
        }
        summary.prefiltered += 1;
        let found = match_patterns(tree, lex);
        if found.is_empty() {
            log::info!("sentence {sentence_id}: lexical match but no licensing subtree, dropped");
            summary.dropped += 1;
        }
        summary
            .constructions
            .extend(found.into_iter().map(|c| LicensedConstruction { sentence_id, ..c }));
    }
    summary
}

/// Per-token scope classes used by the diagnostic probe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ScopeLabel {
    Pre = 1,
    Licensor = 2,
    InScope = 3,
    Npi = 4,
    Post = 5,
}

impl ScopeLabel {
    pub const ALL: [ScopeLabel; 5] = [
        ScopeLabel::Pre,
        ScopeLabel::Licensor,
        ScopeLabel::InScope,
        ScopeLabel::Npi,
        ScopeLabel::Post,
    ];

    /// Zero-based class index, `Pre` = 0.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl From<ScopeLabel> for u8 {
    fn from(label: ScopeLabel) -> u8 {
        label as u8
    }
}

impl TryFrom<u8> for ScopeLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            1..=5 => Ok(Self::ALL[value as usize - 1]),
            _ => Err(format!("scope label out of range: {value}")),
        }
    }
}

impl fmt::Display for ScopeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence_id: usize,
    pub tokens: Vec<String>,
    pub labels: Vec<ScopeLabel>,
}

impl LabeledSentence {
    /// Checks the ordering constraints on a label sequence.
    pub fn is_well_ordered(&self) -> bool {
        if self.labels.len() != self.tokens.len() {
            return false;
        }
        let licensors = self.labels.iter().filter(|l| **l == ScopeLabel::Licensor).count();
        if licensors != 1 || !self.labels.contains(&ScopeLabel::Npi) {
            return false;
        }
        // PRE* LICENSOR (IN_SCOPE|NPI)* POST*
        let stage = |l: &ScopeLabel| match l {
            ScopeLabel::Pre => 0,
            ScopeLabel::Licensor => 1,
            ScopeLabel::InScope | ScopeLabel::Npi => 2,
            ScopeLabel::Post => 3,
        };
        self.labels.windows(2).all(|w| stage(&w[0]) <= stage(&w[1]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("construction index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("inconsistent construction: {0}")]
    Inconsistent(String),
}

/// Assigns the five scope classes to every token of a sentence.
pub fn label_tokens<S: AsRef<str>>(
    tokens: &[S],
    c: &LicensedConstruction,
    lex: &Lexicon,
) -> Result<LabeledSentence, LabelError> {
    let len = tokens.len();
    for index in [c.licensor_index, c.npi_index, c.scope.start] {
        if index >= len {
            return Err(LabelError::IndexOutOfRange { index, len });
        }
    }
    if c.scope.end > len {
        return Err(LabelError::IndexOutOfRange { index: c.scope.end, len });
    }
    if c.scope.start <= c.licensor_index {
        return Err(LabelError::Inconsistent(format!(
            "scope {} does not follow licensor at {}",
            c.scope, c.licensor_index
        )));
    }
    if !c.scope.contains(c.npi_index) {
        return Err(LabelError::Inconsistent(format!(
            "npi at {} outside scope {}",
            c.npi_index, c.scope
        )));
    }
    let labels = tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            if i < c.licensor_index {
                ScopeLabel::Pre
            } else if i == c.licensor_index {
                ScopeLabel::Licensor
            } else if i >= c.scope.end {
                ScopeLabel::Post
            } else if c.scope.contains(i) && lex.is_npi(token.as_ref()) {
                ScopeLabel::Npi
            } else {
                ScopeLabel::InScope
            }
        })
        .collect();
    Ok(LabeledSentence {
        sentence_id: c.sentence_id,
        tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
        labels,
    })
}

pub fn distance_histogram(cs: &[LicensedConstruction]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for c in cs {
        *hist.entry(c.distance).or_insert(0) += 1;
    }
    hist
}

/// Two-column TSV, `distance<TAB>count`, ascending by distance.
pub fn histogram_tsv(hist: &BTreeMap<usize, usize>) -> String {
    let mut out = String::from("distance\tcount\n");
    for (d, n) in hist {
        out.push_str(&format!("{d}\t{n}\n"));
    }
    out
}
