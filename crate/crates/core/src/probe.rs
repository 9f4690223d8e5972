//! Diagnostic classifier: multinomial logistic regression from a per-token
//! feature vector to one of the five scope labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::{additive_prefix_repr, Composition, EmbeddingTable};
use crate::extraction::{LabeledSentence, ScopeLabel};
use crate::lm::{LanguageModel, LmError, LstmState};

const K: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("no feature records")]
    Empty,
    #[error("feature dimension {found} differs from {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// One token's features and gold label. Serialized one record per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub sentence_id: usize,
    pub position: usize,
    pub label: ScopeLabel,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeHyper {
    pub l2: f64,
    pub step: f64,
    pub max_iter: usize,
    /// Stop once the gradient norm drops below this.
    pub tol: f64,
    /// Fraction of sentences held out for evaluation.
    pub test_fraction: f64,
}

impl Default for ProbeHyper {
    fn default() -> Self {
        ProbeHyper {
            l2: 1e-4,
            step: 0.1,
            max_iter: 2000,
            tol: 1e-6,
            test_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub iterations: usize,
    pub final_loss: f64,
    pub l2: f64,
    pub split_seed: Option<u64>,
}

/// Linear map `W x + b`, `W` stored row-major as 5 x `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: [f64; K],
    pub meta: ProbeMeta,
}

impl ProbeModel {
    pub fn logits(&self, x: &[f64]) -> [f64; K] {
        let mut z = self.bias;
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.weights[k * self.dim..(k + 1) * self.dim];
            *zk += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        z
    }
}

fn softmax(z: &[f64; K]) -> [f64; K] {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; K];
    let mut sum = 0.0;
    for k in 0..K {
        p[k] = (z[k] - max).exp();
        sum += p[k];
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

fn argmax(p: &[f64; K]) -> usize {
    let mut best = 0;
    for k in 1..K {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// Predicted label (ties go to the lowest label) and class probabilities.
pub fn predict_probe(model: &ProbeModel, x: &[f64]) -> Result<(ScopeLabel, [f64; K]), ProbeError> {
    if x.len() != model.dim {
        return Err(ProbeError::DimensionMismatch {
            expected: model.dim,
            found: x.len(),
        });
    }
    let p = softmax(&model.logits(x));
    Ok((ScopeLabel::from_index(argmax(&p)).expect("five classes"), p))
}

fn check_dims(records: &[FeatureRecord]) -> Result<usize, ProbeError> {
    let first = records.first().ok_or(ProbeError::Empty)?;
    let dim = first.vector.len();
    for r in records {
        if r.vector.len() != dim {
            return Err(ProbeError::DimensionMismatch {
                expected: dim,
                found: r.vector.len(),
            });
        }
        if r.vector.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::NonFinite("feature vector"));
        }
    }
    Ok(dim)
}

struct Standardized {
    rows: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

// Features are centred and scaled for the optimisation; the transform is
// folded back into the returned weights.
fn standardize(records: &[FeatureRecord], dim: usize) -> Standardized {
    let n = records.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in records {
        mean.iter_mut().zip(&r.vector).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; dim];
    for r in records {
        for j in 0..dim {
            let d = r.vector[j] - mean[j];
            var[j] += d * d / n;
        }
    }
    let scale: Vec<f64> = var.iter().map(|v| if *v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    let mut rows = Vec::with_capacity(records.len() * dim);
    for r in records {
        rows.extend((0..dim).map(|j| (r.vector[j] - mean[j]) / scale[j]));
    }
    Standardized { rows, mean, scale }
}

/// Mean cross-entropy plus `l2/2 * |W|^2`, and its gradient.
fn objective(
    rows: &[f64],
    labels: &[usize],
    dim: usize,
    w: &[f64],
    b: &[f64; K],
    l2: f64,
    grad: Option<(&mut [f64], &mut [f64; K])>,
) -> f64 {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut g = grad;
    if let Some((gw, gb)) = g.as_mut() {
        gw.iter_mut().for_each(|v| *v = 0.0);
        gb.iter_mut().for_each(|v| *v = 0.0);
    }
    for (i, &y) in labels.iter().enumerate() {
        let x = &rows[i * dim..(i + 1) * dim];
        let mut z = *b;
        for (k, zk) in z.iter_mut().enumerate() {
            *zk += w[k * dim..(k + 1) * dim].iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
        let p = softmax(&z);
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        if let Some((gw, gb)) = g.as_mut() {
            for k in 0..K {
                let d = (p[k] - if k == y { 1.0 } else { 0.0 }) / n;
                gb[k] += d;
                gw[k * dim..(k + 1) * dim].iter_mut().zip(x).for_each(|(gv, v)| *gv += d * v);
            }
        }
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * l2 / 2.0;
    if let Some((gw, _)) = g.as_mut() {
        gw.iter_mut().zip(w).for_each(|(gv, v)| *gv += l2 * v);
    }
    loss / n + reg
}

/// Fits on every record, with no held-out split.
pub fn fit_probe(records: &[FeatureRecord], hyper: &ProbeHyper) -> Result<ProbeModel, ProbeError> {
    fit_probe_traced(records, hyper).map(|(m, _)| m)
}

/// [`fit_probe`], also returning the objective before each step and after
/// the last one.
pub fn fit_probe_traced(records: &[FeatureRecord], hyper: &ProbeHyper) -> Result<(ProbeModel, Vec<f64>), ProbeError> {
    let dim = check_dims(records)?;
    let classes: BTreeSet<ScopeLabel> = records.iter().map(|r| r.label).collect();
    if classes.len() < 2 {
        return Err(ProbeError::DegenerateData("fewer than two distinct labels".into()));
    }
    let labels: Vec<usize> = records.iter().map(|r| r.label.index()).collect();
    let std = standardize(records, dim);

    let mut w = vec![0.0; K * dim];
    let mut b = [0.0; K];
    let mut gw = vec![0.0; K * dim];
    let mut gb = [0.0; K];
    let mut loss = objective(&std.rows, &labels, dim, &w, &b, hyper.l2, Some((&mut gw, &mut gb)));
    let mut step = hyper.step;
    let mut iterations = 0;
    let mut cand_w = vec![0.0; K * dim];
    let mut trace = vec![loss];
    while iterations < hyper.max_iter {
        let gnorm = (gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>()).sqrt();
        if gnorm < hyper.tol {
            break;
        }
        // Halve the step until the objective does not increase.
        let (cand_b, cand_loss) = loop {
            cand_w.iter_mut().zip(w.iter().zip(&gw)).for_each(|(c, (a, g))| *c = a - step * g);
            let mut cb = b;
            cb.iter_mut().zip(&gb).for_each(|(c, g)| *c -= step * g);
            let l = objective(&std.rows, &labels, dim, &cand_w, &cb, hyper.l2, None);
            if l <= loss || step < 1e-12 {
                break (cb, l);
            }
            step /= 2.0;
        };
        if cand_loss > loss {
            break;
        }
        if !cand_loss.is_finite() {
            return Err(ProbeError::NonFinite("probe loss"));
        }
        std::mem::swap(&mut w, &mut cand_w);
        b = cand_b;
        loss = objective(&std.rows, &labels, dim, &w, &b, hyper.l2, Some((&mut gw, &mut gb)));
        trace.push(loss);
        iterations += 1;
    }

    // Undo the standardisation: W' = W / s, b' = b - W' m.
    let mut bias = b;
    for k in 0..K {
        for j in 0..dim {
            w[k * dim + j] /= std.scale[j];
            bias[k] -= w[k * dim + j] * std.mean[j];
        }
    }
    let model = ProbeModel {
        dim,
        weights: w,
        bias,
        meta: ProbeMeta {
            iterations,
            final_loss: loss,
            l2: hyper.l2,
            split_seed: None,
        },
    };
    Ok((model, trace))
}

/// Sentence-level split: the sentence ids are shuffled with `seed` and
/// `test_fraction` of them (at least one, at most all but one) are held out.
pub fn split_by_sentence(
    records: &[FeatureRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureRecord>, Vec<FeatureRecord>), ProbeError> {
    let mut ids: Vec<usize> = records
        .iter()
        .map(|r| r.sentence_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < 2 {
        return Err(ProbeError::DegenerateData("need at least two sentences to split".into()));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1);
    let test: BTreeSet<usize> = ids[..n_test].iter().copied().collect();
    let (held, train): (Vec<_>, Vec<_>) = records.iter().cloned().partition(|r| test.contains(&r.sentence_id));
    Ok((train, held))
}

/// Splits by sentence, fits on the training part and returns the model with
/// the held-out records.
pub fn train_probe(
    records: &[FeatureRecord],
    split_seed: u64,
    hyper: &ProbeHyper,
) -> Result<(ProbeModel, Vec<FeatureRecord>), ProbeError> {
    check_dims(records)?;
    let (train, held) = split_by_sentence(records, hyper.test_fraction, split_seed)?;
    let mut model = fit_probe(&train, hyper)?;
    model.meta.split_seed = Some(split_seed);
    Ok((model, held))
}

/// Counts indexed `[predicted][gold]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; K]; K],
}

impl ConfusionMatrix {
    pub fn add(&mut self, predicted: ScopeLabel, gold: ScopeLabel) {
        self.counts[predicted.index()][gold.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..K).map(|k| self.counts[k][k]).sum()
    }

    pub fn gold_total(&self, gold: ScopeLabel) -> usize {
        (0..K).map(|p| self.counts[p][gold.index()]).sum()
    }

    /// Rows are predictions, columns gold labels, with a final column-sum row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pred\\gold");
        for l in ScopeLabel::ALL {
            let _ = write!(out, "\t{}", l as u8);
        }
        out.push('\n');
        for p in ScopeLabel::ALL {
            let _ = write!(out, "{}", p as u8);
            for g in ScopeLabel::ALL {
                let _ = write!(out, "\t{}", self.counts[p.index()][g.index()]);
            }
            out.push('\n');
        }
        out.push_str("Total");
        for g in ScopeLabel::ALL {
            let _ = write!(out, "\t{}", self.gold_total(g));
        }
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub tokens: usize,
    pub sentences: usize,
    pub token_accuracy: f64,
    /// Recall per gold label; `None` when the label never occurs.
    pub per_class_accuracy: [Option<f64>; K],
    /// Fraction of sentences with every token labelled correctly.
    pub sentence_exact: f64,
    /// Accuracy on the first token after the scope, over sentences that have one.
    pub first_post_scope_accuracy: Option<f64>,
    pub confusion: ConfusionMatrix,
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "tokens,{}", self.tokens);
        let _ = writeln!(out, "sentences,{}", self.sentences);
        let _ = writeln!(out, "token_accuracy,{}", self.token_accuracy);
        for l in ScopeLabel::ALL {
            let _ = writeln!(out, "class_{}_accuracy,{}", l as u8, opt(self.per_class_accuracy[l.index()]));
        }
        let _ = writeln!(out, "sentence_exact,{}", self.sentence_exact);
        let _ = writeln!(out, "first_post_scope_accuracy,{}", opt(self.first_post_scope_accuracy));
        out
    }
}

pub fn evaluate_probe(model: &ProbeModel, records: &[FeatureRecord]) -> Result<ProbeReport, ProbeError> {
    if records.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mut confusion = ConfusionMatrix::default();
    // sentence -> (all correct, first POST token as (position, correct))
    let mut per_sentence: BTreeMap<usize, (bool, Option<(usize, bool)>)> = BTreeMap::new();
    for r in records {
        let (pred, _) = predict_probe(model, &r.vector)?;
        confusion.add(pred, r.label);
        let correct = pred == r.label;
        let entry = per_sentence.entry(r.sentence_id).or_insert((true, None));
        entry.0 &= correct;
        if r.label == ScopeLabel::Post && entry.1.is_none_or(|(pos, _)| r.position < pos) {
            entry.1 = Some((r.position, correct));
        }
    }
    let total = confusion.total();
    let per_class_accuracy = ScopeLabel::ALL.map(|l| {
        let n = confusion.gold_total(l);
        (n > 0).then(|| confusion.counts[l.index()][l.index()] as f64 / n as f64)
    });
    let exact = per_sentence.values().filter(|(ok, _)| *ok).count();
    let firsts: Vec<bool> = per_sentence.values().filter_map(|(_, f)| f.map(|(_, ok)| ok)).collect();
    Ok(ProbeReport {
        tokens: total,
        sentences: per_sentence.len(),
        token_accuracy: confusion.trace() as f64 / total as f64,
        per_class_accuracy,
        sentence_exact: exact as f64 / per_sentence.len() as f64,
        first_post_scope_accuracy: (!firsts.is_empty())
            .then(|| firsts.iter().filter(|ok| **ok).count() as f64 / firsts.len() as f64),
        confusion,
    })
}

/// Accuracy of always predicting the most frequent label of `train` on `test`.
pub fn majority_rate(train: &[FeatureRecord], test: &[FeatureRecord]) -> f64 {
    let mut counts = [0usize; K];
    train.iter().for_each(|r| counts[r.label.index()] += 1);
    let mut best = 0;
    for k in 1..K {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    if test.is_empty() {
        return 0.0;
    }
    test.iter().filter(|r| r.label.index() == best).count() as f64 / test.len() as f64
}

/// Final-layer LM hidden state after each token, starting from `init`.
pub fn lm_features(
    lm: &LanguageModel,
    init: &LstmState,
    sentences: &[LabeledSentence],
) -> Result<Vec<FeatureRecord>, LmError> {
    let mut out = Vec::new();
    for s in sentences {
        let scored = lm.score(init, &s.tokens)?;
        for (position, (label, vector)) in s.labels.iter().zip(scored.hidden).enumerate() {
            out.push(FeatureRecord {
                sentence_id: s.sentence_id,
                position,
                label: *label,
                vector,
            });
        }
    }
    Ok(out)
}

/// Additive-embedding representation of each token's prefix.
pub fn baseline_features(table: &EmbeddingTable, sentences: &[LabeledSentence], mode: Composition) -> Vec<FeatureRecord> {
    let mut out = Vec::new();
    for s in sentences {
        let reprs = additive_prefix_repr(&s.tokens, table, mode);
        for (position, (label, vector)) in s.labels.iter().zip(reprs).enumerate() {
            out.push(FeatureRecord {
                sentence_id: s.sentence_id,
                position,
                label: *label,
                vector,
            });
        }
    }
    out
}
