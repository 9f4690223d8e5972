//! Condition comparisons, distance buckets, relative-difference histograms
//! and rank correlations over scored rewrite sets.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::extraction::LicensedConstruction;
use crate::lm::{conditional_probability, perplexity, prefix_perplexity, slor, LanguageModel, LmError, LstmState, Unigram};
use crate::rewrite::{Condition, RewriteSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("relative difference undefined: both values are zero")]
    BothZero,
    #[error("negative or non-finite value {0}")]
    InvalidValue(f64),
    #[error("no valid pairs for {first} vs {second} ({metric})")]
    NoValidPairs { first: Subject, second: Subject, metric: Metric },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("constant input")]
    ConstantInput,
    #[error("need at least two observations")]
    TooShort,
    #[error("no construction for sentence {sentence_id}, npi {npi_index}")]
    MissingConstruction { sentence_id: usize, npi_index: usize },
    #[error("bucket edges must be strictly increasing and non-empty")]
    BadEdges,
    #[error("scores line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// `(a - b) / ((a + b) / 2)`, in `[-2, 2]` for non-negative inputs.
pub fn relative_difference(a: f64, b: f64) -> Result<f64, AnalysisError> {
    for v in [a, b] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(AnalysisError::InvalidValue(v));
        }
    }
    if a == 0.0 && b == 0.0 {
        return Err(AnalysisError::BothZero);
    }
    Ok((a - b) / ((a + b) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantScore {
    /// Perplexity of the prefix ending at the NPI/PPI position.
    pub perplexity: f64,
    /// Probability of the NPI/PPI given its left context.
    pub probability: f64,
    /// SLOR of the same prefix, when a unigram model was supplied.
    pub slor: Option<f64>,
}

/// LM scores of one rewrite set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionScores {
    pub sentence_id: usize,
    pub npi_index: usize,
    pub distance: usize,
    /// Indexed by `Condition as usize`; `None` for invalid variants.
    pub variants: [Option<VariantScore>; 4],
    /// Full-sentence perplexity of the licensed sentence with the NPI removed.
    pub sen_neg: Option<f64>,
    /// The same for the unlicensed sentence.
    pub sen_pos: Option<f64>,
}

impl ConditionScores {
    pub fn variant(&self, c: Condition) -> Option<&VariantScore> {
        self.variants[c as usize].as_ref()
    }
}

fn without(tokens: &[String], index: usize) -> Vec<&str> {
    tokens
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != index)
        .map(|(_, t)| t.as_str())
        .collect()
}

/// Scores every valid variant of `set` from `init`.
pub fn score_rewrite_set(
    lm: &LanguageModel,
    init: &LstmState,
    set: &RewriteSet,
    unigram: Option<&Unigram>,
) -> Result<ConditionScores, AnalysisError> {
    let mut variants = [None; 4];
    for c in Condition::ALL {
        let v = set.variant(c);
        if !v.valid {
            continue;
        }
        let scored = lm.score(init, &v.tokens)?;
        let prefix_slor = unigram.map(|u| {
            let mut prefix = scored.clone();
            prefix.ids.truncate(v.item_index + 1);
            prefix.log_probs.truncate(v.item_index + 1);
            slor(&prefix, u)
        });
        variants[c as usize] = Some(VariantScore {
            perplexity: prefix_perplexity(&scored, v.item_index)?,
            probability: conditional_probability(&scored, v.item_index)?,
            slor: prefix_slor,
        });
    }
    let sentence = |c: Condition| -> Result<Option<f64>, AnalysisError> {
        let v = set.variant(c);
        let rest = without(&v.tokens, v.item_index);
        if !v.valid || rest.is_empty() {
            return Ok(None);
        }
        Ok(Some(perplexity(&lm.score(init, &rest)?)?))
    };
    Ok(ConditionScores {
        sentence_id: set.source.sentence_id,
        npi_index: set.source.npi_index,
        distance: set.source.distance,
        variants,
        sen_neg: sentence(Condition::NpiNeg)?,
        sen_pos: sentence(Condition::NpiPos)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Perplexity,
    Probability,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Perplexity => "perplexity",
            Metric::Probability => "probability",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a comparison row is about: one of the four conditions, or one of
/// the two NPI-less sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subject {
    Cond(Condition),
    SenNeg,
    SenPos,
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Cond(c) => f.write_str(c.as_str()),
            Subject::SenNeg => f.write_str("SEN_NEG"),
            Subject::SenPos => f.write_str("SEN_POS"),
        }
    }
}

/// The six ordered pairs, upper triangle of the condition order.
pub const CONDITION_PAIRS: [(Condition, Condition); 6] = [
    (Condition::NpiNeg, Condition::NpiPos),
    (Condition::NpiNeg, Condition::PpiNeg),
    (Condition::NpiNeg, Condition::PpiPos),
    (Condition::NpiPos, Condition::PpiNeg),
    (Condition::NpiPos, Condition::PpiPos),
    (Condition::PpiNeg, Condition::PpiPos),
];

/// How often `first` scores better than `second`: lower perplexity, or
/// higher probability. Ties count against compliance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub first: Subject,
    pub second: Subject,
    /// Items where both sides are valid.
    pub n: usize,
    pub complying: usize,
    /// `relative_difference(first, second)` per item, where defined.
    pub rel_diffs: Vec<f64>,
}

impl ComparisonRow {
    fn new(metric: Metric, first: Subject, second: Subject) -> Self {
        ComparisonRow {
            metric,
            first,
            second,
            n: 0,
            complying: 0,
            rel_diffs: Vec::new(),
        }
    }

    fn add(&mut self, a: f64, b: f64) {
        self.n += 1;
        let better = match self.metric {
            Metric::Perplexity => a < b,
            Metric::Probability => a > b,
        };
        if better {
            self.complying += 1;
        }
        if let Ok(rd) = relative_difference(a, b) {
            self.rel_diffs.push(rd);
        }
    }

    /// Percentage of complying items; `None` when `n == 0`.
    pub fn percent(&self) -> Option<f64> {
        (self.n > 0).then(|| 100.0 * self.complying as f64 / self.n as f64)
    }
}

/// Rows for the six condition pairs under both metrics, followed by the
/// SEN_NEG vs SEN_POS perplexity row. Empty rows are kept.
pub fn tally_conditions<'a, I>(scores: I) -> Vec<ComparisonRow>
where
    I: IntoIterator<Item = &'a ConditionScores>,
{
    let mut rows: Vec<ComparisonRow> = [Metric::Perplexity, Metric::Probability]
        .into_iter()
        .flat_map(|m| {
            CONDITION_PAIRS
                .iter()
                .map(move |&(a, b)| ComparisonRow::new(m, Subject::Cond(a), Subject::Cond(b)))
        })
        .collect();
    rows.push(ComparisonRow::new(Metric::Perplexity, Subject::SenNeg, Subject::SenPos));
    for s in scores {
        for row in rows.iter_mut() {
            let pair = match (row.first, row.second) {
                (Subject::Cond(a), Subject::Cond(b)) => s.variant(a).zip(s.variant(b)).map(|(x, y)| match row.metric {
                    Metric::Perplexity => (x.perplexity, y.perplexity),
                    Metric::Probability => (x.probability, y.probability),
                }),
                _ => s.sen_neg.zip(s.sen_pos),
            };
            if let Some((a, b)) = pair {
                row.add(a, b);
            }
        }
    }
    rows
}

/// Like [`tally_conditions`], but every condition pair must have at least
/// one valid item. The SEN row is dropped when it is empty.
pub fn compare_conditions(scores: &[ConditionScores]) -> Result<Vec<ComparisonRow>, AnalysisError> {
    let mut rows = tally_conditions(scores);
    for row in &rows {
        if row.n == 0 && matches!(row.first, Subject::Cond(_)) {
            return Err(AnalysisError::NoValidPairs {
                first: row.first,
                second: row.second,
                metric: row.metric,
            });
        }
    }
    rows.retain(|r| r.n > 0);
    Ok(rows)
}

/// Half-open distance range; `hi == None` is open-ended.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub lo: usize,
    pub hi: Option<usize>,
    pub n: usize,
    pub rows: Vec<ComparisonRow>,
}

impl Bucket {
    pub fn name(&self) -> String {
        match self.hi {
            Some(hi) if hi == self.lo + 1 => self.lo.to_string(),
            Some(hi) => format!("{}-{}", self.lo, hi - 1),
            None => format!("{}+", self.lo),
        }
    }
}

/// Groups items by licensor-NPI distance. `edges` `[e0, e1, .., ek]` give
/// buckets `[e0, e1), .., [ek, inf)`; distances below `e0` are ignored.
pub fn bucket_by_distance(
    scores: &[ConditionScores],
    constructions: &[LicensedConstruction],
    edges: &[usize],
) -> Result<Vec<Bucket>, AnalysisError> {
    if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::BadEdges);
    }
    let distance: BTreeMap<(usize, usize), usize> = constructions
        .iter()
        .map(|c| ((c.sentence_id, c.npi_index), c.distance))
        .collect();
    let mut members: Vec<Vec<&ConditionScores>> = vec![Vec::new(); edges.len()];
    for s in scores {
        let d = *distance
            .get(&(s.sentence_id, s.npi_index))
            .ok_or(AnalysisError::MissingConstruction {
                sentence_id: s.sentence_id,
                npi_index: s.npi_index,
            })?;
        if let Some(b) = edges.iter().rposition(|&e| e <= d) {
            members[b].push(s);
        }
    }
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(i, items)| Bucket {
            lo: edges[i],
            hi: edges.get(i + 1).copied(),
            n: items.len(),
            rows: tally_conditions(items),
        })
        .collect())
}

pub const HIST_BINS: usize = 40;

/// Counts over `[-2, 2]` in 40 equal bins; 2.0 falls in the last bin.
pub fn rd_histogram(values: &[f64]) -> [usize; HIST_BINS] {
    let mut bins = [0; HIST_BINS];
    let width = 4.0 / HIST_BINS as f64;
    for v in values {
        let i = ((v + 2.0) / width).floor().clamp(0.0, (HIST_BINS - 1) as f64) as usize;
        bins[i] += 1;
    }
    bins
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[order[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalysisError::TooShort);
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidValue(*v));
    }
    let constant = |v: &[f64]| v.iter().all(|a| *a == v[0]);
    if constant(x) || constant(y) {
        return Err(AnalysisError::ConstantInput);
    }
    Ok(())
}

/// Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(x, y)?;
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Kendall's tau-b.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    check_pair(x, y)?;
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]) as i64;
            let dy = y[i].total_cmp(&y[j]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => ties_x += 1,
                (_, 0) => ties_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = concordant + discordant;
    let denom = (((n0 + ties_x) * (n0 + ties_y)) as f64).sqrt();
    Ok((concordant - discordant) as f64 / denom)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_default()
}

/// One line per pair per metric.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("metric,first,second,n,complying,percent\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.metric,
            r.first,
            r.second,
            r.n,
            r.complying,
            fmt_opt(r.percent())
        );
    }
    out
}

/// Bucket, item count, then the percentage for each condition pair under
/// `metric`; empty cells for pairs with no valid items.
pub fn bucket_csv(buckets: &[Bucket], metric: Metric) -> String {
    let mut out = String::from("bucket,n");
    for (a, b) in CONDITION_PAIRS {
        let _ = write!(out, ",{a}>{b}");
    }
    out.push('\n');
    for bucket in buckets {
        let _ = write!(out, "{},{}", bucket.name(), bucket.n);
        for (a, b) in CONDITION_PAIRS {
            let row = bucket
                .rows
                .iter()
                .find(|r| r.metric == metric && r.first == Subject::Cond(a) && r.second == Subject::Cond(b));
            let _ = write!(out, ",{}", fmt_opt(row.and_then(ComparisonRow::percent)));
        }
        out.push('\n');
    }
    out
}

/// One column per row of `metric`, one line per histogram bin.
pub fn histogram_tsv(rows: &[ComparisonRow], metric: Metric) -> String {
    let selected: Vec<&ComparisonRow> = rows.iter().filter(|r| r.metric == metric).collect();
    let hists: Vec<[usize; HIST_BINS]> = selected.iter().map(|r| rd_histogram(&r.rel_diffs)).collect();
    let mut out = String::from("bin_lo\tbin_hi");
    for r in &selected {
        let _ = write!(out, "\t{}>{}", r.first, r.second);
    }
    out.push('\n');
    let width = 4.0 / HIST_BINS as f64;
    for i in 0..HIST_BINS {
        let lo = -2.0 + i as f64 * width;
        let _ = write!(out, "{lo:.1}\t{:.1}", lo + width);
        for h in &hists {
            let _ = write!(out, "\t{}", h[i]);
        }
        out.push('\n');
    }
    out
}

pub const SCORES_HEADER: &str = "sentence_id,npi_index,distance,condition,perplexity,probability,slor";

fn opt_num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long format: one line per valid variant plus the SEN rows.
pub fn scores_to_csv(scores: &[ConditionScores]) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for s in scores {
        let key = format!("{},{},{}", s.sentence_id, s.npi_index, s.distance);
        for c in Condition::ALL {
            if let Some(v) = s.variant(c) {
                let _ = writeln!(out, "{key},{c},{},{},{}", v.perplexity, v.probability, opt_num(v.slor));
            }
        }
        for (name, pp) in [("SEN_NEG", s.sen_neg), ("SEN_POS", s.sen_pos)] {
            if let Some(pp) = pp {
                let _ = writeln!(out, "{key},{name},{pp},,");
            }
        }
    }
    out
}

/// Inverse of [`scores_to_csv`]. Items keep their order of first appearance.
pub fn scores_from_csv(text: &str) -> Result<Vec<ConditionScores>, AnalysisError> {
    let err = |line: usize, message: String| AnalysisError::Parse { line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == SCORES_HEADER => {}
        _ => return Err(err(1, format!("expected header {SCORES_HEADER:?}"))),
    }
    let mut out: Vec<ConditionScores> = Vec::new();
    let mut index: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(err(ln, format!("expected 7 fields, found {}", f.len())));
        }
        let int = |s: &str| usize::from_str(s).map_err(|e| err(ln, format!("{s:?}: {e}")));
        let num = |s: &str| f64::from_str(s).map_err(|e| err(ln, format!("{s:?}: {e}")));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let (sentence_id, npi_index, distance) = (int(f[0])?, int(f[1])?, int(f[2])?);
        let slot = *index.entry((sentence_id, npi_index)).or_insert_with(|| {
            out.push(ConditionScores {
                sentence_id,
                npi_index,
                distance,
                variants: [None; 4],
                sen_neg: None,
                sen_pos: None,
            });
            out.len() - 1
        });
        let item = &mut out[slot];
        match f[3] {
            "SEN_NEG" => item.sen_neg = Some(num(f[4])?),
            "SEN_POS" => item.sen_pos = Some(num(f[4])?),
            name => {
                let c = Condition::from_str(name).map_err(|_| err(ln, format!("unknown condition {name:?}")))?;
                item.variants[c as usize] = Some(VariantScore {
                    perplexity: num(f[4])?,
                    probability: num(f[5])?,
                    slor: opt(f[6])?,
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: usize, d: usize, pp: [Option<f64>; 4], p: [Option<f64>; 4]) -> ConditionScores {
        let mut variants = [None; 4];
        for k in 0..4 {
            if let (Some(a), Some(b)) = (pp[k], p[k]) {
                variants[k] = Some(VariantScore {
                    perplexity: a,
                    probability: b,
                    slor: None,
                });
            }
        }
        ConditionScores {
            sentence_id: id,
            npi_index: 3,
            distance: d,
            variants,
            sen_neg: Some(10.0),
            sen_pos: Some(12.0),
        }
    }

    #[test]
    fn relative_difference_cases() {
        assert_eq!(relative_difference(3.0, 1.0).unwrap(), 1.0);
        assert_eq!(relative_difference(0.0, 5.0).unwrap(), -2.0);
        assert_eq!(relative_difference(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(relative_difference(0.0, 0.0), Err(AnalysisError::BothZero));
        assert!(relative_difference(-1.0, 1.0).is_err());
    }

    #[test]
    fn compare_counts_and_ties() {
        let s = vec![
            item(0, 2, [Some(5.0), Some(9.0), Some(7.0), Some(6.0)], [Some(0.3), Some(0.1), Some(0.2), Some(0.2)]),
            item(1, 3, [Some(9.0), Some(9.0), Some(7.0), Some(6.0)], [Some(0.1), Some(0.2), Some(0.2), Some(0.25)]),
        ];
        let rows = compare_conditions(&s).unwrap();
        let find = |m: Metric, a: Condition, b: Condition| {
            rows.iter()
                .find(|r| r.metric == m && r.first == Subject::Cond(a) && r.second == Subject::Cond(b))
                .unwrap()
        };
        let r = find(Metric::Perplexity, Condition::NpiNeg, Condition::NpiPos);
        assert_eq!((r.n, r.complying), (2, 1));
        assert_eq!(r.percent(), Some(50.0));
        let r = find(Metric::Probability, Condition::PpiNeg, Condition::PpiPos);
        assert_eq!((r.n, r.complying), (2, 0));
        let sen = rows.last().unwrap();
        assert_eq!((sen.first, sen.second, sen.complying), (Subject::SenNeg, Subject::SenPos, 2));
        assert_eq!(rows.len(), 13);
    }

    #[test]
    fn empty_pair_is_an_error() {
        let s = vec![item(0, 2, [Some(5.0), Some(9.0), None, None], [Some(0.3), Some(0.1), None, None])];
        assert!(matches!(compare_conditions(&s), Err(AnalysisError::NoValidPairs { .. })));
        let rows = tally_conditions(&s);
        assert_eq!(rows[1].percent(), None);
    }

    #[test]
    fn buckets_partition_items() {
        let s: Vec<_> = (0..6)
            .map(|i| item(i, i + 1, [Some(5.0), Some(9.0), Some(7.0), Some(6.0)], [Some(0.3), Some(0.1), Some(0.2), Some(0.2)]))
            .collect();
        let cs: Vec<_> = s
            .iter()
            .map(|x| LicensedConstruction {
                sentence_id: x.sentence_id,
                tokens: vec![],
                licensor_index: 0,
                npi_index: 3,
                scope: crate::treebank::Span::new(1, 4),
                pattern_id: 1,
                distance: x.distance,
            })
            .collect();
        let b = bucket_by_distance(&s, &cs, &[2, 3, 5]).unwrap();
        assert_eq!(b.iter().map(|x| x.n).collect::<Vec<_>>(), vec![1, 2, 2]);
        assert_eq!(b.iter().map(Bucket::name).collect::<Vec<_>>(), vec!["2", "3-4", "5+"]);
        assert!(bucket_by_distance(&s, &cs, &[3, 3]).is_err());
        assert!(bucket_by_distance(&s, &cs[..2], &[1]).is_err());
        let csv = bucket_csv(&b, Metric::Probability);
        assert!(csv.starts_with("bucket,n,NPI_NEG>NPI_POS,"));
        assert!(csv.contains("\n3-4,2,100.00,"));
    }

    #[test]
    fn histogram_edges() {
        let h = rd_histogram(&[-2.0, -1.95, 0.0, 1.99, 2.0]);
        assert_eq!(h[0], 2);
        assert_eq!(h[20], 1);
        assert_eq!(h[39], 2);
        assert_eq!(h.iter().sum::<usize>(), 5);
    }

    #[test]
    fn correlations() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&x, &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // one swapped pair out of six
        assert!((kendall_tau(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert!((spearman_rho(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(spearman_rho(&x, &[1.0]), Err(AnalysisError::LengthMismatch(4, 1)));
        assert_eq!(kendall_tau(&x, &[1.0; 4]), Err(AnalysisError::ConstantInput));
    }

    #[test]
    fn scores_csv_round_trip() {
        let mut s = vec![item(4, 2, [Some(5.5), Some(9.0), None, Some(6.0)], [Some(0.3), Some(0.1), None, Some(0.2)])];
        s[0].variants[0].as_mut().unwrap().slor = Some(-0.25);
        let text = scores_to_csv(&s);
        assert!(text.contains("\n4,3,2,NPI_NEG,5.5,0.3,-0.25\n"));
        assert!(text.contains("\n4,3,2,SEN_POS,12,,\n"));
        assert_eq!(scores_from_csv(&text).unwrap(), s);
        assert!(scores_from_csv("bad\n").is_err());
    }
}
