//! Bracketed constituency trees, one sentence per line.
//!
//! Preterminals are leaves: `(NN dog)` is a single node with label `NN`
//! and token `dog`. Spans are half-open token intervals assigned in
//! left-to-right leaf order starting at 0.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, position: usize) -> bool {
        self.start <= position && position < self.end
    }

    /// True if `other` lies entirely inside `self`.
    pub fn covers(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreebankError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced brackets at byte {position}")]
    UnbalancedBrackets { position: usize },
    #[error("node without label or content at byte {position}")]
    EmptyNode { position: usize },
    #[error("bare token outside a preterminal at byte {position}")]
    BareToken { position: usize },
    #[error("trailing content after tree at byte {position}")]
    TrailingContent { position: usize },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<TreebankError>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Labeled constituency tree with token spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub label: String,
    pub children: Vec<ParseTree>,
    pub token: Option<String>,
    pub span: Span,
}

impl ParseTree {
    pub fn leaf(label: impl Into<String>, token: impl Into<String>, position: usize) -> Self {
        ParseTree {
            label: label.into(),
            children: Vec::new(),
            token: Some(token.into()),
            span: Span::new(position, position + 1),
        }
    }

    /// Builds an internal node; the span is derived from the children.
    ///
    /// Panics if `children` is empty.
    pub fn node(label: impl Into<String>, children: Vec<ParseTree>) -> Self {
        let start = children.first().expect("internal node needs children").span.start;
        let end = children.last().expect("internal node needs children").span.end;
        ParseTree {
            label: label.into(),
            children,
            token: None,
            span: Span::new(start, end),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.token.is_some()
    }

    /// Left-to-right leaf tokens.
    pub fn leaves(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.span.len());
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<String>) {
        match &self.token {
            Some(token) => out.push(token.clone()),
            None => self.children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// The single token under this node, if its yield is exactly one leaf
    /// (a preterminal or a unary chain ending in one).
    pub fn single_token(&self) -> Option<&str> {
        match (&self.token, self.children.as_slice()) {
            (Some(token), _) => Some(token),
            (None, [only]) => only.single_token(),
            _ => None,
        }
    }

    pub fn label_class(&self) -> LabelClass {
        normalize_label(&self.label)
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Nodes<'_> {
        Nodes { stack: vec![self] }
    }

    /// Bracketed notation that `parse_ptb` reads back to an identical tree.
    pub fn to_bracketed(&self) -> String {
        let mut out = String::new();
        self.write_bracketed(&mut out);
        out
    }

    fn write_bracketed(&self, out: &mut String) {
        out.push('(');
        out.push_str(&self.label);
        match &self.token {
            Some(token) => {
                out.push(' ');
                out.push_str(token);
            }
            None => {
                for child in &self.children {
                    out.push(' ');
                    child.write_bracketed(out);
                }
            }
        }
        out.push(')');
    }

    /// Renumbers spans so that leaves occupy consecutive positions from `start`.
    pub fn reindex(&mut self, start: usize) -> usize {
        if self.is_leaf() {
            self.span = Span::new(start, start + 1);
            return start + 1;
        }
        let mut next = start;
        for child in &mut self.children {
            next = child.reindex(next);
        }
        self.span = Span::new(start, next);
        next
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bracketed())
    }
}

pub struct Nodes<'a> {
    stack: Vec<&'a ParseTree>,
}

impl<'a> Iterator for Nodes<'a> {
    type Item = &'a ParseTree;

    fn next(&mut self) -> Option<Self::Item> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

pub fn leaves(tree: &ParseTree) -> Vec<String> {
    tree.leaves()
}

/// Coarse label classes used by the subtree patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelClass {
    VerbGroup,
    Modal,
    Adverb,
    NounPhrase,
    PrepPhrase,
    AdjPhrase,
    AdvPhrase,
    Clause,
    Subclause,
    Other,
}

/// Maps a raw treebank label onto its class. Function tags and indices
/// (`NP-SBJ`, `NP-1`, `S=2`) are stripped first; labels that start with a
/// dash (`-NONE-`, `-LRB-`) are kept whole.
pub fn normalize_label(raw: &str) -> LabelClass {
    let base = if raw.starts_with('-') {
        raw
    } else {
        raw.split(['-', '=']).next().unwrap_or(raw)
    };
    match base {
        "VB" | "VBD" | "VBZ" | "VBP" | "VBN" | "VBG" | "VP" => LabelClass::VerbGroup,
        "MD" => LabelClass::Modal,
        "RB" | "RBR" | "RBS" => LabelClass::Adverb,
        "NP" => LabelClass::NounPhrase,
        "PP" => LabelClass::PrepPhrase,
        "ADJP" => LabelClass::AdjPhrase,
        "ADVP" => LabelClass::AdvPhrase,
        "S" => LabelClass::Clause,
        "SBAR" => LabelClass::Subclause,
        _ => LabelClass::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lexeme<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn lex(line: &str) -> Vec<(usize, Lexeme<'_>)> {
    let mut out = Vec::new();
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                out.push((i, Lexeme::Open));
                i += 1;
            }
            b')' => {
                out.push((i, Lexeme::Close));
                i += 1;
            }
            b if b.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !matches!(bytes[i], b'(' | b')')
                    && !bytes[i].is_ascii_whitespace()
                {
                    i += 1;
                }
                out.push((start, Lexeme::Atom(&line[start..i])));
            }
        }
    }
    out
}

struct Parser<'a> {
    lexemes: Vec<(usize, Lexeme<'a>)>,
    pos: usize,
    end: usize,
    next_leaf: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(usize, Lexeme<'a>)> {
        self.lexemes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Result<(usize, Lexeme<'a>), TreebankError> {
        let item = self
            .peek()
            .ok_or(TreebankError::UnbalancedBrackets { position: self.end })?;
        self.pos += 1;
        Ok(item)
    }

    fn node(&mut self) -> Result<ParseTree, TreebankError> {
        let (open_at, open) = self.bump()?;
        match open {
            Lexeme::Open => {}
            Lexeme::Close => return Err(TreebankError::UnbalancedBrackets { position: open_at }),
            Lexeme::Atom(_) => return Err(TreebankError::BareToken { position: open_at }),
        }
        let label = match self.peek() {
            Some((_, Lexeme::Atom(label))) => {
                self.pos += 1;
                label.to_string()
            }
            Some((_, Lexeme::Open)) => String::new(),
            Some((_, Lexeme::Close)) => return Err(TreebankError::EmptyNode { position: open_at }),
            None => return Err(TreebankError::UnbalancedBrackets { position: self.end }),
        };
        match self.peek() {
            Some((_, Lexeme::Atom(token))) => {
                if label.is_empty() {
                    return Err(TreebankError::EmptyNode { position: open_at });
                }
                self.pos += 1;
                match self.bump()? {
                    (_, Lexeme::Close) => {}
                    (at, _) => return Err(TreebankError::BareToken { position: at }),
                }
                let leaf = ParseTree::leaf(label, token, self.next_leaf);
                self.next_leaf += 1;
                Ok(leaf)
            }
            Some((_, Lexeme::Open)) => {
                let mut children = Vec::new();
                loop {
                    match self.peek() {
                        Some((_, Lexeme::Open)) => children.push(self.node()?),
                        Some((_, Lexeme::Close)) => {
                            self.pos += 1;
                            break;
                        }
                        Some((at, Lexeme::Atom(_))) => {
                            return Err(TreebankError::BareToken { position: at })
                        }
                        None => return Err(TreebankError::UnbalancedBrackets { position: self.end }),
                    }
                }
                Ok(ParseTree::node(label, children))
            }
            Some((_, Lexeme::Close)) => Err(TreebankError::EmptyNode { position: open_at }),
            None => Err(TreebankError::UnbalancedBrackets { position: self.end }),
        }
    }
}

/// Parses a single bracketed tree.
pub fn parse_ptb(line: &str) -> Result<ParseTree, TreebankError> {
    let lexemes = lex(line);
    if lexemes.is_empty() {
        return Err(TreebankError::EmptyInput);
    }
    let mut parser = Parser {
        lexemes,
        pos: 0,
        end: line.len(),
        next_leaf: 0,
    };
    let tree = parser.node()?;
    match parser.peek() {
        None => Ok(tree),
        Some((at, Lexeme::Close)) => Err(TreebankError::UnbalancedBrackets { position: at }),
        Some((at, _)) => Err(TreebankError::TrailingContent { position: at }),
    }
}

/// Parses a whole treebank text; blank lines are skipped. Errors carry the
/// 1-based line number.
pub fn parse_treebank(text: &str) -> Result<Vec<ParseTree>, TreebankError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            parse_ptb(line).map_err(|e| TreebankError::AtLine {
                line: i + 1,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn read_treebank<R: BufRead>(reader: R) -> Result<Vec<ParseTree>, TreebankError> {
    let mut trees = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| TreebankError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_ptb(&line).map_err(|e| TreebankError::AtLine {
            line: i + 1,
            source: Box::new(e),
        })?;
        trees.push(tree);
    }
    Ok(trees)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE2_ROW1: &str = "(S (NP (PRP He)) (VP (VBD did) (RB n't) (VP (VB have) (NP (DT any) (NN trouble)) (S (VP (VBG going) (ADVP (RB along)))))) (. .))";

    #[test]
    fn two_leaf_tree() {
        let tree = parse_ptb("(S (NP (PRP He)) (VP (VBD left)))").unwrap();
        assert_eq!(tree.leaves(), vec!["He", "left"]);
        let spans: Vec<Span> = tree.nodes().filter(|n| n.is_leaf()).map(|n| n.span).collect();
        assert_eq!(spans, vec![Span::new(0, 1), Span::new(1, 2)]);
        assert_eq!(tree.span, Span::new(0, 2));
    }

    #[test]
    fn unbalanced_reports_position() {
        let line = "(S (NP (PRP He))";
        assert_eq!(
            parse_ptb(line),
            Err(TreebankError::UnbalancedBrackets { position: line.len() })
        );
        assert_eq!(
            parse_ptb("(NN dog))"),
            Err(TreebankError::UnbalancedBrackets { position: 8 })
        );
    }

    #[test]
    fn empty_and_trailing() {
        assert_eq!(parse_ptb("()"), Err(TreebankError::EmptyNode { position: 0 }));
        assert_eq!(parse_ptb("(NP )"), Err(TreebankError::EmptyNode { position: 0 }));
        assert_eq!(
            parse_ptb("(NN dog) (NN cat)"),
            Err(TreebankError::TrailingContent { position: 9 })
        );
        assert_eq!(parse_ptb("   "), Err(TreebankError::EmptyInput));
        assert!(matches!(parse_ptb("(NP dog cat)"), Err(TreebankError::BareToken { .. })));
    }

    #[test]
    fn single_leaf() {
        let tree = parse_ptb("(NN dog)").unwrap();
        assert!(tree.is_leaf());
        assert_eq!(leaves(&tree), vec!["dog"]);
    }

    #[test]
    fn table_row_one_leaves() {
        let tree = parse_ptb(TABLE2_ROW1).unwrap();
        assert_eq!(
            tree.leaves().join(" "),
            "He did n't have any trouble going along ."
        );
    }

    #[test]
    fn escaped_brackets_are_opaque() {
        let tree = parse_ptb("(NP (-LRB- -LRB-) (NN x) (-RRB- -RRB-))").unwrap();
        assert_eq!(tree.leaves(), vec!["-LRB-", "x", "-RRB-"]);
        assert_eq!(normalize_label("-LRB-"), LabelClass::Other);
    }

    #[test]
    fn outer_unlabeled_root() {
        let tree = parse_ptb("( (S (NN x)))").unwrap();
        assert_eq!(tree.label, "");
        assert_eq!(tree.children[0].label, "S");
    }

    #[test]
    fn unary_chain_kept() {
        let tree = parse_ptb("(S (VP (VP (VB go))))").unwrap();
        assert_eq!(tree.children[0].children[0].label, "VP");
        assert_eq!(tree.single_token(), Some("go"));
    }

    #[test]
    fn label_classes() {
        assert_eq!(normalize_label("VBD"), LabelClass::VerbGroup);
        assert_eq!(normalize_label("VP"), LabelClass::VerbGroup);
        assert_eq!(normalize_label("MD"), LabelClass::Modal);
        assert_eq!(normalize_label("RBR"), LabelClass::Adverb);
        assert_eq!(normalize_label("NP-SBJ"), LabelClass::NounPhrase);
        assert_eq!(normalize_label("NP-SBJ-1"), LabelClass::NounPhrase);
        assert_eq!(normalize_label("S=2"), LabelClass::Clause);
        assert_eq!(normalize_label("SBAR"), LabelClass::Subclause);
        assert_eq!(normalize_label("PP-LOC"), LabelClass::PrepPhrase);
        assert_eq!(normalize_label("ADJP"), LabelClass::AdjPhrase);
        assert_eq!(normalize_label("ADVP"), LabelClass::AdvPhrase);
        assert_eq!(normalize_label("XYZ"), LabelClass::Other);
        assert_eq!(normalize_label(""), LabelClass::Other);
    }

    #[test]
    fn treebank_skips_blank_lines_and_reports_line() {
        let text = "(NN a)\n\n(NN b)\n(NN c\n";
        match parse_treebank(text) {
            Err(TreebankError::AtLine { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(parse_treebank("(NN a)\n\n(NN b)\n").unwrap().len(), 2);
    }
}
