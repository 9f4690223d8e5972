//! Seeded generator of parsed sentences with gold licensing records.
//!
//! Negative sentences realise one of the six licensing configurations
//! with a chosen licensor, NPI and licensor-to-NPI distance; positive
//! sentences reuse the same templates without a licensor (or with
//! *everybody* for *nobody*) and with a positive item where the NPI would
//! be. Positive items also appear after the scope of negative sentences,
//! never inside it.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::extraction::{Lexicon, LicensedConstruction, LicensorRewrite};
use crate::treebank::{ParseTree, Span};

pub const MAX_DISTANCE: usize = 30;

const AUX: &str = "did";
const MODAL: &str = "could";
const COPULA: &str = "was";
const COPULA_PRESENT: &str = "is";
const FUNCTION_WORDS: [&str; 8] = ["the", AUX, MODAL, COPULA, COPULA_PRESENT, "but", ",", "."];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("pattern {pattern} cannot realise distance {distance}")]
    InfeasibleDistance { pattern: u8, distance: usize },
    #[error("invalid grammar configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarConfig {
    /// Single-token subject pronouns.
    pub subjects: Vec<String>,
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
    pub adverbs: Vec<String>,
    pub prepositions: Vec<String>,
    pub licensor_weights: BTreeMap<String, f64>,
    pub npi_weights: BTreeMap<String, f64>,
    pub pattern_weights: BTreeMap<u8, f64>,
    pub distance_weights: BTreeMap<usize, f64>,
    /// Fraction of sentences that contain a licensed NPI.
    pub negative_fraction: f64,
    pub seed: u64,
}

fn words(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn weights<K: Ord + Clone>(items: &[(K, f64)]) -> BTreeMap<K, f64> {
    items.iter().cloned().collect()
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            subjects: words(&["he", "she", "they", "we", "i", "you"]),
            nouns: words(&[
                "dog", "cat", "man", "woman", "book", "house", "car", "tree", "river", "city", "letter", "child",
            ]),
            verbs: words(&["see", "find", "take", "bring", "need", "want", "like", "know"]),
            adverbs: words(&["really", "just", "still", "also", "soon"]),
            prepositions: words(&["near", "with", "for", "from"]),
            licensor_weights: weights(&[
                ("not".to_string(), 0.35),
                ("n't".to_string(), 0.35),
                ("never".to_string(), 0.2),
                ("nobody".to_string(), 0.1),
            ]),
            npi_weights: weights(&[
                ("any".to_string(), 0.4),
                ("anything".to_string(), 0.2),
                ("anyone".to_string(), 0.1),
                ("anybody".to_string(), 0.1),
                ("anywhere".to_string(), 0.1),
                ("anytime".to_string(), 0.05),
                ("anymore".to_string(), 0.05),
            ]),
            pattern_weights: (1..=6).map(|p| (p, 1.0)).collect(),
            distance_weights: weights(&[
                (2, 0.472),
                (3, 0.2),
                (4, 0.12),
                (5, 0.08),
                (6, 0.06),
                (7, 0.04),
                (8, 0.028),
            ]),
            negative_fraction: 0.5,
            seed: 1,
        }
    }
}

/// Smallest licensor-to-NPI distance a pattern's template can produce.
pub fn min_distance(pattern: u8) -> usize {
    if pattern == 3 {
        1
    } else {
        2
    }
}

impl GrammarConfig {
    pub fn validate(&self, lex: &Lexicon) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let pools = [
            ("subjects", &self.subjects),
            ("nouns", &self.nouns),
            ("verbs", &self.verbs),
            ("adverbs", &self.adverbs),
            ("prepositions", &self.prepositions),
        ];
        let reserved: BTreeSet<String> = lex
            .all_words()
            .into_iter()
            .chain(FUNCTION_WORDS.iter().map(|w| w.to_string()))
            .collect();
        let mut seen = BTreeSet::new();
        for (name, pool) in pools {
            if pool.is_empty() {
                return bad(format!("{name} pool is empty"));
            }
            for w in pool {
                if w.is_empty() || w.chars().any(|c| c.is_whitespace() || c == '(' || c == ')') {
                    return bad(format!("{name} entry {w:?} is not a plain token"));
                }
                if reserved.contains(&w.to_lowercase()) {
                    return bad(format!("{name} entry {w:?} is reserved"));
                }
                if !seen.insert(w.clone()) {
                    return bad(format!("{w:?} appears in more than one pool"));
                }
            }
        }
        fn check<K: std::fmt::Debug>(name: &str, m: &BTreeMap<K, f64>) -> Result<(), SynthError> {
            if m.values().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(SynthError::InvalidConfig(format!("{name} weights must be non-negative")));
            }
            if !m.values().any(|w| *w > 0.0) {
                return Err(SynthError::InvalidConfig(format!("{name} weights are all zero")));
            }
            Ok(())
        }
        check("licensor", &self.licensor_weights)?;
        check("npi", &self.npi_weights)?;
        check("pattern", &self.pattern_weights)?;
        check("distance", &self.distance_weights)?;
        for l in self.licensor_weights.keys() {
            if !lex.is_licensor(l) || lex.licensor_rewrite(l).is_none() {
                return bad(format!("{l:?} is not a licensor"));
            }
        }
        for n in self.npi_weights.keys() {
            if !lex.is_npi(n) {
                return bad(format!("{n:?} is not an NPI"));
            }
        }
        if !(0.0..=1.0).contains(&self.negative_fraction) {
            return bad("negative_fraction must lie in [0, 1]".into());
        }
        for (&p, &wp) in &self.pattern_weights {
            if !(1..=6).contains(&p) {
                return bad(format!("unknown pattern {p}"));
            }
            if wp == 0.0 {
                continue;
            }
            for (&d, &wd) in &self.distance_weights {
                if wd > 0.0 && (d < min_distance(p) || d > MAX_DISTANCE) {
                    return Err(SynthError::InfeasibleDistance { pattern: p, distance: d });
                }
            }
        }
        Ok(())
    }
}

/// Generated sentences with their trees and, for negative sentences, the
/// gold construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub trees: Vec<ParseTree>,
    pub gold: Vec<LicensedConstruction>,
}

impl SynthCorpus {
    pub fn sentences(&self) -> Vec<Vec<String>> {
        self.trees.iter().map(ParseTree::leaves).collect()
    }

    /// One bracketed tree per line.
    pub fn treebank_text(&self) -> String {
        self.trees.iter().map(|t| t.to_bracketed() + "\n").collect()
    }
}

fn lf(tag: &str, word: &str) -> ParseTree {
    ParseTree::leaf(tag, word, 0)
}

fn nd(label: &str, children: Vec<ParseTree>) -> ParseTree {
    ParseTree::node(label, children)
}

fn sampler<K: Clone>(m: &BTreeMap<K, f64>) -> (Vec<K>, WeightedIndex<f64>) {
    let keys: Vec<K> = m.keys().cloned().collect();
    let dist = WeightedIndex::new(m.values().copied()).expect("validated weights");
    (keys, dist)
}

struct Generator<'a> {
    cfg: &'a GrammarConfig,
    lex: &'a Lexicon,
    rng: ChaCha8Rng,
    ppis: Vec<String>,
    adverbial_ppis: Vec<String>,
}

impl Generator<'_> {
    fn pick(&mut self, pool: &[String]) -> String {
        pool[self.rng.gen_range(0..pool.len())].clone()
    }

    fn noun_np(&mut self) -> ParseTree {
        let n = self.pick(&self.cfg.nouns);
        nd("NP", vec![lf("DT", "the"), lf("NN", &n)])
    }

    fn pp(&mut self) -> ParseTree {
        let p = self.pick(&self.cfg.prepositions);
        let np = self.noun_np();
        nd("PP", vec![lf("IN", &p), np])
    }

    fn subject(&mut self) -> ParseTree {
        let r: f64 = self.rng.gen();
        if r < 0.5 {
            let s = self.pick(&self.cfg.subjects);
            nd("NP", vec![lf("PRP", &s)])
        } else if r < 0.85 {
            self.noun_np()
        } else {
            let head = self.noun_np();
            let pp = self.pp();
            nd("NP", vec![head, pp])
        }
    }

    /// Constituents covering exactly `n` tokens.
    fn fillers(&mut self, mut n: usize) -> Vec<ParseTree> {
        let mut out = Vec::new();
        while n > 0 {
            if n >= 3 && self.rng.gen_bool(0.4) {
                out.push(self.pp());
                n -= 3;
            } else {
                let a = self.pick(&self.cfg.adverbs);
                out.push(nd("ADVP", vec![lf("RB", &a)]));
                n -= 1;
            }
        }
        out
    }

    /// Phrase headed by an NPI or PPI; the item is its first token.
    fn item_phrase(&mut self, item: &str) -> ParseTree {
        match item {
            "any" | "some" => {
                let n = self.pick(&self.cfg.nouns);
                nd("NP", vec![lf("DT", item), lf("NN", &n)])
            }
            w if w.ends_with("where") || w.ends_with("time") || w.ends_with("more") => {
                nd("ADVP", vec![lf("RB", item)])
            }
            _ => nd("NP", vec![lf("NN", item)]),
        }
    }

    /// `pre` filler tokens, the item phrase and an optional trailing PP.
    fn scope_body(&mut self, pre: usize, item: &str) -> Vec<ParseTree> {
        let mut out = self.fillers(pre);
        out.push(self.item_phrase(item));
        if self.rng.gen_bool(0.3) {
            out.push(self.pp());
        }
        out
    }

    fn verb_scope(&mut self, pre: usize, item: &str) -> ParseTree {
        let v = self.pick(&self.cfg.verbs);
        let mut children = vec![lf("VB", &v)];
        children.extend(self.scope_body(pre, item));
        nd("VP", children)
    }

    /// Optional `, but SUBJ VERB OBJ` clause after the scope, then `.`.
    fn ending(&mut self) -> Vec<ParseTree> {
        let mut out = Vec::new();
        if self.rng.gen_bool(0.4) {
            let subj = self.subject();
            let v = self.pick(&self.cfg.verbs);
            let obj = if self.rng.gen_bool(0.5) {
                let p = self.pick(&self.ppis.clone());
                self.item_phrase(&p)
            } else {
                self.noun_np()
            };
            out.push(lf(",", ","));
            out.push(lf("CC", "but"));
            out.push(nd("S", vec![subj, nd("VP", vec![lf("VB", &v), obj])]));
        }
        out.push(lf(".", "."));
        out
    }

    fn licensor_leaf(word: &str) -> ParseTree {
        if word == "nobody" || word == "everybody" {
            lf("NN", word)
        } else {
            lf("RB", word)
        }
    }

    /// Builds one sentence. Returns the tree and the child-index paths of
    /// the nodes that make up the scope.
    fn sentence(
        &mut self,
        pattern: u8,
        licensor: Option<&str>,
        item: &str,
        distance: usize,
    ) -> (ParseTree, Vec<Vec<usize>>) {
        let lic: Vec<ParseTree> = licensor.map(Self::licensor_leaf).into_iter().collect();
        let k = lic.len();
        let subj = self.subject();
        let (mut root, paths) = match pattern {
            1 | 2 => {
                let head = if pattern == 1 { lf("VBD", AUX) } else { lf("MD", MODAL) };
                let scope = self.verb_scope(distance - 2, item);
                let vp = nd("VP", [vec![head], lic, vec![scope]].concat());
                (vec![subj, vp], vec![vec![1, 1 + k]])
            }
            3 => {
                let scope = if distance == 1 {
                    nd("NP", self.scope_body(0, item))
                } else if self.rng.gen_bool(0.5) {
                    let p = self.pick(&self.cfg.prepositions);
                    nd("PP", [vec![lf("IN", &p)], self.scope_body(distance - 2, item)].concat())
                } else {
                    nd("NP", self.scope_body(distance - 1, item))
                };
                let vp = nd("VP", [vec![lf("VBD", COPULA)], lic, vec![scope]].concat());
                (vec![subj, vp], vec![vec![1, 1 + k]])
            }
            4 => {
                let scope = self.verb_scope(distance - 2, item);
                let vp = nd("VP", [vec![subj], lic, vec![scope]].concat());
                (vec![vp], vec![vec![0, 1 + k]])
            }
            5 => {
                let scope = nd("S", vec![self.verb_scope(distance - 2, item)]);
                let children = [vec![subj, lf("VBZ", COPULA_PRESENT)], lic, vec![scope]].concat();
                (children, vec![vec![2 + k]])
            }
            6 => {
                let n = self.pick(&self.cfg.nouns);
                let np = nd("NP", vec![lf("NN", &n)]);
                let advp = nd("ADVP", self.scope_body(distance - 2, item));
                let vp = nd("VP", [vec![lf("VBD", COPULA)], lic, vec![np, advp]].concat());
                (vec![subj, vp], vec![vec![1, 1 + k], vec![1, 2 + k]])
            }
            _ => unreachable!("validated pattern id"),
        };
        root.extend(self.ending());
        let mut tree = nd("S", root);
        tree.reindex(0);
        (tree, paths)
    }
}

fn node_at<'t>(tree: &'t ParseTree, path: &[usize]) -> &'t ParseTree {
    path.iter().fold(tree, |n, &i| &n.children[i])
}

/// Generates `n` sentences. Deterministic in `cfg.seed`.
pub fn generate_corpus(cfg: &GrammarConfig, n: usize, lex: &Lexicon) -> Result<SynthCorpus, SynthError> {
    cfg.validate(lex)?;
    if n == 0 {
        return Err(SynthError::InvalidConfig("sentence count must be positive".into()));
    }
    let ppis: Vec<String> = lex.ppi_map.values().cloned().collect();
    let adverbial_ppis: Vec<String> = ppis
        .iter()
        .filter(|p| p.ends_with("where") || p.ends_with("time"))
        .cloned()
        .collect();
    let mut g = Generator {
        cfg,
        lex,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        ppis,
        adverbial_ppis,
    };
    let (licensors, lic_dist) = sampler(&cfg.licensor_weights);
    let (npis, npi_dist) = sampler(&cfg.npi_weights);
    let (patterns, pat_dist) = sampler(&cfg.pattern_weights);
    let (distances, dist_dist) = sampler(&cfg.distance_weights);

    let mut trees = Vec::with_capacity(n);
    let mut gold = Vec::new();
    for sentence_id in 0..n {
        let negative = g.rng.gen_bool(cfg.negative_fraction);
        let licensor = licensors[lic_dist.sample(&mut g.rng)].clone();
        let npi = npis[npi_dist.sample(&mut g.rng)].clone();
        let pattern = patterns[pat_dist.sample(&mut g.rng)];
        let distance = distances[dist_dist.sample(&mut g.rng)];
        if negative {
            let (tree, paths) = g.sentence(pattern, Some(&licensor), &npi, distance);
            let tokens = tree.leaves();
            let licensor_index = tokens.iter().position(|t| *t == licensor).expect("licensor placed");
            let npi_index = tokens.iter().position(|t| *t == npi).expect("npi placed");
            let nodes: Vec<&ParseTree> = paths.iter().map(|p| node_at(&tree, p)).collect();
            let scope = Span::new(nodes[0].span.start, nodes[nodes.len() - 1].span.end);
            debug_assert_eq!(npi_index - licensor_index, distance);
            gold.push(LicensedConstruction {
                sentence_id,
                tokens,
                licensor_index,
                npi_index,
                scope,
                pattern_id: pattern,
                distance: npi_index - licensor_index,
            });
            trees.push(tree);
        } else {
            let replacement = match g.lex.licensor_rewrite(&licensor) {
                Some(LicensorRewrite::Replace(w)) => Some(w.clone()),
                _ => None,
            };
            let item = match g.lex.ppi_for(&npi) {
                Some(p) => p.to_string(),
                None => g.pick(&g.adverbial_ppis.clone()),
            };
            let (tree, _) = g.sentence(pattern, replacement.as_deref(), &item, distance);
            trees.push(tree);
        }
    }
    Ok(SynthCorpus { trees, gold })
}

/// Distinct tokens the configuration can produce.
pub fn vocabulary(cfg: &GrammarConfig, lex: &Lexicon) -> BTreeSet<String> {
    let mut v: BTreeSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
    for pool in [&cfg.subjects, &cfg.nouns, &cfg.verbs, &cfg.adverbs, &cfg.prepositions] {
        v.extend(pool.iter().cloned());
    }
    v.extend(lex.all_words());
    v
}
