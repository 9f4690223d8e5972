//! Command-line driver: one subcommand per pipeline stage.
//!
//! Settings come from flags, then from an optional flat config file
//! (`--config`), then from built-in defaults. Config keys are scoped by
//! subcommand, e.g. `synth.seed = 3` or `train-lm.epochs = 6`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use npi_core::analysis::{
    bucket_by_distance, bucket_csv, compare_conditions, comparison_csv, histogram_tsv, score_rewrite_set,
    scores_from_csv, scores_to_csv, Metric,
};
use npi_core::baseline::{load_embedding_table, Composition, EmbeddingTable};
use npi_core::extraction::{
    distance_histogram, extract_corpus, histogram_tsv as distance_tsv, label_tokens, LabeledSentence, Lexicon,
    LicensedConstruction,
};
use npi_core::lm::{fit_unigram, train_lm, LanguageModel, LmError, TrainConfig};
use npi_core::probe::{
    baseline_features, evaluate_probe, lm_features, majority_rate, split_by_sentence, train_probe, FeatureRecord,
    ProbeError, ProbeHyper,
};
use npi_core::rewrite::{build_rewrite_set, RewriteSet};
use npi_core::synthcorpus::{generate_corpus, GrammarConfig};
use npi_core::treebank::{read_treebank, ParseTree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Bad flags, config or settings.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "npi", version, about = "NPI licensing experiments: corpora, extraction, LM scoring and probing")]
pub struct Cli {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic treebank with gold constructions.
    Synth(SynthArgs),
    /// Find licensed NPI constructions in a treebank.
    Extract(ExtractArgs),
    /// Build the four condition variants for every construction.
    Rewrite(RewriteArgs),
    /// Label every token with its scope class.
    Annotate(AnnotateArgs),
    /// Train the LSTM language model.
    TrainLm(TrainLmArgs),
    /// Score rewrite sets with a trained model.
    Score(ScoreArgs),
    /// Train and evaluate the diagnostic scope classifier.
    Probe(ProbeArgs),
    /// Comparison tables, histograms and distance buckets from scores.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Rewrite(_) => "rewrite",
            Command::Annotate(_) => "annotate",
            Command::TrainLm(_) => "train-lm",
            Command::Score(_) => "score",
            Command::Probe(_) => "probe",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of sentences.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of sentences containing a licensed NPI.
    #[arg(long)]
    pub negative_fraction: Option<f64>,
    /// Output treebank, one bracketed tree per line.
    #[arg(long)]
    pub out_trees: Option<String>,
    /// Output gold constructions (JSON lines).
    #[arg(long)]
    pub out_gold: Option<String>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Input treebank.
    #[arg(long)]
    pub trees: Option<String>,
    /// Constructions (JSON lines).
    #[arg(long)]
    pub out: Option<String>,
    /// Optional distance histogram (TSV).
    #[arg(long)]
    pub histogram: Option<String>,
}

#[derive(Args, Debug)]
pub struct RewriteArgs {
    #[arg(long)]
    pub constructions: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub constructions: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainLmArgs {
    /// Training treebank.
    #[arg(long)]
    pub trees: Option<String>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub emb: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub chain: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Rewrite sets (JSON lines).
    #[arg(long)]
    pub rewrites: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// The model's training treebank; gives the initial state and the
    /// unigram model for SLOR.
    #[arg(long)]
    pub train_trees: Option<String>,
    /// Scores CSV.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    /// Labeled sentences from `annotate`.
    #[arg(long)]
    pub labels: Option<String>,
    /// Precomputed feature dump; replaces `--labels`/`--source`.
    #[arg(long)]
    pub features: Option<String>,
    /// Feature source: lm, embeddings or random.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long)]
    pub train_trees: Option<String>,
    /// Word vector text file for `--source embeddings`.
    #[arg(long)]
    pub embeddings: Option<String>,
    /// Vector size for `--source random`.
    #[arg(long)]
    pub baseline_dim: Option<usize>,
    #[arg(long)]
    pub baseline_seed: Option<u64>,
    /// prefix-mean or word-only.
    #[arg(long)]
    pub composition: Option<String>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Also write the features used (JSON lines).
    #[arg(long)]
    pub dump_features: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub scores: Option<String>,
    /// Constructions for the distance buckets; buckets are skipped without it.
    #[arg(long)]
    pub constructions: Option<String>,
    /// Comma-separated increasing bucket edges.
    #[arg(long)]
    pub bucket_edges: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
}

/// Every key a config file may set.
pub const CONFIG_KEYS: &[&str] = &[
    "synth.n",
    "synth.seed",
    "synth.negative-fraction",
    "synth.out-trees",
    "synth.out-gold",
    "extract.trees",
    "extract.out",
    "extract.histogram",
    "rewrite.constructions",
    "rewrite.out",
    "annotate.constructions",
    "annotate.out",
    "train-lm.trees",
    "train-lm.out",
    "train-lm.layers",
    "train-lm.emb",
    "train-lm.hidden",
    "train-lm.learning-rate",
    "train-lm.epochs",
    "train-lm.batch-size",
    "train-lm.chain",
    "train-lm.clip-norm",
    "train-lm.seed",
    "score.rewrites",
    "score.checkpoint",
    "score.train-trees",
    "score.out",
    "probe.labels",
    "probe.features",
    "probe.source",
    "probe.checkpoint",
    "probe.train-trees",
    "probe.embeddings",
    "probe.baseline-dim",
    "probe.baseline-seed",
    "probe.composition",
    "probe.split-seed",
    "probe.test-fraction",
    "probe.l2",
    "probe.step",
    "probe.max-iter",
    "probe.dump-features",
    "probe.out",
    "report.scores",
    "report.constructions",
    "report.bucket-edges",
    "report.out",
];

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(usage(format!("config line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

/// Resolved settings for one subcommand run.
struct Settings {
    command: &'static str,
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    fn lookup<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        let full = format!("{}.{key}", self.command);
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(&full) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| usage(format!("config `{full}`: invalid value {text:?}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        match self.lookup(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        self.lookup(key, flag)?
            .ok_or_else(|| usage(format!("{}: missing --{key} (or `{}.{key}` in the config)", self.command, self.command)))
    }

    /// Path to an input file, which must exist.
    fn input(&mut self, key: &str, flag: Option<String>) -> Result<PathBuf> {
        let path = PathBuf::from(self.require(key, flag)?);
        if !path.exists() {
            return Err(usage(format!("--{key}: {} does not exist", path.display())));
        }
        Ok(path)
    }

    fn optional_input(&mut self, key: &str, flag: Option<String>) -> Result<Option<PathBuf>> {
        match self.lookup(key, flag)? {
            Some(p) => {
                let path = PathBuf::from(p);
                if !path.exists() {
                    return Err(usage(format!("--{key}: {} does not exist", path.display())));
                }
                Ok(Some(path))
            }
            None => Ok(None),
        }
    }

    fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.command.as_bytes());
        h.update(b"\n");
        for (k, v) in &self.resolved {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn seeds(&self) -> BTreeMap<&str, &str> {
        self.resolved
            .iter()
            .filter(|(k, _)| k.ends_with("seed"))
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Inputs, outputs and extra facts of one run, written as JSON next to the
/// outputs.
struct Manifest {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: Map<String, Value>,
}

impl Manifest {
    fn new() -> Self {
        Manifest {
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Map::new(),
        }
    }

    fn write(&self, settings: &Settings, path: &Path) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<Map<String, Value>> {
            paths
                .iter()
                .map(|p| Ok((p.display().to_string(), Value::String(sha256_file(p)?))))
                .collect()
        };
        let manifest = json!({
            "command": settings.command,
            "config_hash": settings.hash(),
            "settings": settings.resolved,
            "seeds": settings.seeds(),
            "inputs": digests(&self.inputs)?,
            "outputs": digests(&self.outputs)?,
            "extra": self.extra,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write_file(path, text.as_bytes())
    }
}

fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn read_trees(path: &Path) -> Result<Vec<ParseTree>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_treebank(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn tree_sentences(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read_trees(path)?.iter().map(ParseTree::leaves).collect())
}

fn load_model(path: &Path) -> Result<LanguageModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    LanguageModel::from_bytes(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn synth(a: SynthArgs, s: &mut Settings) -> Result<()> {
    let defaults = GrammarConfig::default();
    let n = s.get("n", a.n, 1000)?;
    let cfg = GrammarConfig {
        seed: s.get("seed", a.seed, defaults.seed)?,
        negative_fraction: s.get("negative-fraction", a.negative_fraction, defaults.negative_fraction)?,
        ..defaults
    };
    let out_trees = PathBuf::from(s.require("out-trees", a.out_trees)?);
    let out_gold = PathBuf::from(s.require("out-gold", a.out_gold)?);
    log::info!("config hash {} seed {}", s.hash(), cfg.seed);
    let lex = Lexicon::default();
    let corpus = generate_corpus(&cfg, n, &lex).map_err(|e| usage(e.to_string()))?;
    write_file(&out_trees, corpus.treebank_text().as_bytes())?;
    write_file(&out_gold, to_jsonl(&corpus.gold)?.as_bytes())?;
    let mut m = Manifest::new();
    m.outputs = vec![out_trees.clone(), out_gold];
    m.extra.insert("sentences".into(), json!(n));
    m.extra.insert("gold_constructions".into(), json!(corpus.gold.len()));
    m.write(s, &manifest_beside(&out_trees))
}

fn extract(a: ExtractArgs, s: &mut Settings) -> Result<()> {
    let trees_path = s.input("trees", a.trees)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    let hist = s.lookup("histogram", a.histogram)?.map(PathBuf::from);
    log::info!("config hash {}", s.hash());
    let trees = read_trees(&trees_path)?;
    let summary = extract_corpus(&trees, &Lexicon::default());
    log::info!(
        "{} sentences, {} passed the prefilter, {} constructions, {} dropped",
        summary.sentences,
        summary.prefiltered,
        summary.constructions.len(),
        summary.dropped
    );
    write_file(&out, to_jsonl(&summary.constructions)?.as_bytes())?;
    let mut m = Manifest::new();
    m.inputs.push(trees_path);
    m.outputs.push(out.clone());
    if let Some(h) = hist {
        write_file(&h, distance_tsv(&distance_histogram(&summary.constructions)).as_bytes())?;
        m.outputs.push(h);
    }
    m.extra.insert("sentences".into(), json!(summary.sentences));
    m.extra.insert("prefiltered".into(), json!(summary.prefiltered));
    m.extra.insert("constructions".into(), json!(summary.constructions.len()));
    m.extra.insert("dropped".into(), json!(summary.dropped));
    m.write(s, &manifest_beside(&out))
}

fn rewrite(a: RewriteArgs, s: &mut Settings) -> Result<()> {
    let input = s.input("constructions", a.constructions)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    log::info!("config hash {}", s.hash());
    let lex = Lexicon::default();
    let constructions: Vec<LicensedConstruction> = read_jsonl(&input)?;
    let sets = constructions
        .iter()
        .map(|c| build_rewrite_set(c, &lex).with_context(|| format!("sentence {}", c.sentence_id)))
        .collect::<Result<Vec<RewriteSet>>>()?;
    write_file(&out, to_jsonl(&sets)?.as_bytes())?;
    let mut m = Manifest::new();
    m.inputs.push(input);
    m.outputs.push(out.clone());
    m.write(s, &manifest_beside(&out))
}

fn annotate(a: AnnotateArgs, s: &mut Settings) -> Result<()> {
    let input = s.input("constructions", a.constructions)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    log::info!("config hash {}", s.hash());
    let lex = Lexicon::default();
    let constructions: Vec<LicensedConstruction> = read_jsonl(&input)?;
    let mut labeled: Vec<LabeledSentence> = Vec::new();
    let mut skipped = 0;
    for c in &constructions {
        // One label sequence per sentence: the first construction wins.
        if labeled.last().is_some_and(|l| l.sentence_id == c.sentence_id) {
            skipped += 1;
            continue;
        }
        labeled.push(label_tokens(&c.tokens, c, &lex).with_context(|| format!("sentence {}", c.sentence_id))?);
    }
    if skipped > 0 {
        log::info!("{skipped} further constructions in already labeled sentences skipped");
    }
    write_file(&out, to_jsonl(&labeled)?.as_bytes())?;
    let mut m = Manifest::new();
    m.inputs.push(input);
    m.outputs.push(out.clone());
    m.extra.insert("sentences".into(), json!(labeled.len()));
    m.extra.insert("skipped".into(), json!(skipped));
    m.write(s, &manifest_beside(&out))
}

fn train(a: TrainLmArgs, s: &mut Settings) -> Result<()> {
    let trees = s.input("trees", a.trees)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    let d = TrainConfig::default();
    let config = TrainConfig {
        layers: s.get("layers", a.layers, d.layers)?,
        emb: s.get("emb", a.emb, d.emb)?,
        hidden: s.get("hidden", a.hidden, d.hidden)?,
        learning_rate: s.get("learning-rate", a.learning_rate, d.learning_rate)?,
        epochs: s.get("epochs", a.epochs, d.epochs)?,
        batch_size: s.get("batch-size", a.batch_size, d.batch_size)?,
        chain: s.get("chain", a.chain, d.chain)?,
        clip_norm: s.get("clip-norm", a.clip_norm, d.clip_norm)?,
        seed: s.get("seed", a.seed, d.seed)?,
        ..d
    };
    log::info!("config hash {} seed {}", s.hash(), config.seed);
    let corpus = tree_sentences(&trees)?;
    let outcome = train_lm(&corpus, &config)?;
    for (epoch, loss) in outcome.epoch_losses.iter().enumerate() {
        log::info!("epoch {} loss {loss:.4}", epoch + 1);
    }
    write_file(&out, &outcome.model.to_bytes())?;
    let mut m = Manifest::new();
    m.inputs.push(trees);
    m.outputs.push(out.clone());
    m.extra.insert("epoch_losses".into(), json!(outcome.epoch_losses));
    m.extra.insert("vocabulary".into(), json!(outcome.model.vocab.len()));
    m.write(s, &manifest_beside(&out))
}

fn score(a: ScoreArgs, s: &mut Settings) -> Result<()> {
    let rewrites = s.input("rewrites", a.rewrites)?;
    let checkpoint = s.input("checkpoint", a.checkpoint)?;
    let train_trees = s.input("train-trees", a.train_trees)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    log::info!("config hash {}", s.hash());
    let lm = load_model(&checkpoint)?;
    let train = tree_sentences(&train_trees)?;
    let init = lm.average_init_state(&train)?;
    let unigram = fit_unigram(&train, &lm.vocab)?;
    let sets: Vec<RewriteSet> = read_jsonl(&rewrites)?;
    let scores = sets
        .iter()
        .map(|set| {
            score_rewrite_set(&lm, &init, set, Some(&unigram)).with_context(|| format!("sentence {}", set.source.sentence_id))
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&out, scores_to_csv(&scores).as_bytes())?;
    let mut m = Manifest::new();
    m.inputs = vec![rewrites, checkpoint, train_trees];
    m.outputs.push(out.clone());
    m.write(s, &manifest_beside(&out))
}

fn features_for(a: &mut ProbeArgs, s: &mut Settings, m: &mut Manifest) -> Result<Vec<FeatureRecord>> {
    if let Some(path) = s.optional_input("features", a.features.take())? {
        m.inputs.push(path.clone());
        return read_jsonl(&path);
    }
    let labels = s.input("labels", a.labels.take())?;
    m.inputs.push(labels.clone());
    let sentences: Vec<LabeledSentence> = read_jsonl(&labels)?;
    let composition = match s.get("composition", a.composition.take(), "prefix-mean".to_string())?.as_str() {
        "prefix-mean" => Composition::PrefixMean,
        "word-only" => Composition::WordOnly,
        other => return Err(usage(format!("--composition: unknown value {other:?}"))),
    };
    match s.get("source", a.source.take(), "lm".to_string())?.as_str() {
        "lm" => {
            let checkpoint = s.input("checkpoint", a.checkpoint.take())?;
            let train_trees = s.input("train-trees", a.train_trees.take())?;
            let lm = load_model(&checkpoint)?;
            let init = lm.average_init_state(&tree_sentences(&train_trees)?)?;
            m.inputs.extend([checkpoint, train_trees]);
            Ok(lm_features(&lm, &init, &sentences)?)
        }
        "embeddings" => {
            let path = s.input("embeddings", a.embeddings.take())?;
            let table = load_embedding_table(&path).with_context(|| format!("loading {}", path.display()))?;
            m.inputs.push(path);
            Ok(baseline_features(&table, &sentences, composition))
        }
        "random" => {
            let dim = s.get("baseline-dim", a.baseline_dim, 32)?;
            let seed = s.get("baseline-seed", a.baseline_seed, 5)?;
            let words: Vec<&str> = sentences.iter().flat_map(|x| x.tokens.iter().map(String::as_str)).collect();
            let table = EmbeddingTable::random(&words, dim, seed);
            Ok(baseline_features(&table, &sentences, composition))
        }
        other => Err(usage(format!("--source: unknown value {other:?}"))),
    }
}

fn probe(mut a: ProbeArgs, s: &mut Settings) -> Result<()> {
    let out = PathBuf::from(s.require("out", a.out.take())?);
    let dump = s.lookup("dump-features", a.dump_features.take())?.map(PathBuf::from);
    let d = ProbeHyper::default();
    let hyper = ProbeHyper {
        l2: s.get("l2", a.l2, d.l2)?,
        step: s.get("step", a.step, d.step)?,
        max_iter: s.get("max-iter", a.max_iter, d.max_iter)?,
        test_fraction: s.get("test-fraction", a.test_fraction, d.test_fraction)?,
        ..d
    };
    let split_seed = s.get("split-seed", a.split_seed, 21)?;
    let mut m = Manifest::new();
    let records = features_for(&mut a, s, &mut m)?;
    log::info!("config hash {} split seed {split_seed}", s.hash());
    let (model, held) = train_probe(&records, split_seed, &hyper)?;
    let report = evaluate_probe(&model, &held)?;
    let (train, _) = split_by_sentence(&records, hyper.test_fraction, split_seed)?;
    let majority = majority_rate(&train, &held);
    log::info!(
        "held-out token accuracy {:.4}, majority rate {majority:.4}, {} iterations",
        report.token_accuracy,
        model.meta.iterations
    );

    let csv_path = out.join("probe.csv");
    let tsv_path = out.join("confusion.tsv");
    let model_path = out.join("probe_model.json");
    let mut csv = report.to_csv();
    csv.push_str(&format!("majority_rate,{majority}\n"));
    write_file(&csv_path, csv.as_bytes())?;
    write_file(&tsv_path, report.confusion.to_tsv().as_bytes())?;
    write_file(&model_path, (serde_json::to_string(&model)? + "\n").as_bytes())?;
    m.outputs = vec![csv_path, tsv_path, model_path];
    if let Some(path) = dump {
        write_file(&path, to_jsonl(&records)?.as_bytes())?;
        m.outputs.push(path);
    }
    m.extra.insert("iterations".into(), json!(model.meta.iterations));
    m.write(s, &out.join("manifest.json"))
}

fn parse_edges(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|e| usage(format!("--bucket-edges: {p:?}: {e}")))
        })
        .collect()
}

fn report(a: ReportArgs, s: &mut Settings) -> Result<()> {
    let scores_path = s.input("scores", a.scores)?;
    let constructions = s.optional_input("constructions", a.constructions)?;
    let edges = parse_edges(&s.get("bucket-edges", a.bucket_edges, "2,3,5".to_string())?)?;
    let out = PathBuf::from(s.require("out", a.out)?);
    log::info!("config hash {}", s.hash());
    let text = fs::read_to_string(&scores_path).with_context(|| format!("reading {}", scores_path.display()))?;
    let scores = scores_from_csv(&text).with_context(|| format!("parsing {}", scores_path.display()))?;
    let rows = compare_conditions(&scores)?;

    let mut m = Manifest::new();
    m.inputs.push(scores_path);
    let mut emit = |name: &str, body: String| -> Result<()> {
        let path = out.join(name);
        write_file(&path, body.as_bytes())?;
        m.outputs.push(path);
        Ok(())
    };
    emit("comparison.csv", comparison_csv(&rows))?;
    emit("rd_perplexity.tsv", histogram_tsv(&rows, Metric::Perplexity))?;
    emit("rd_probability.tsv", histogram_tsv(&rows, Metric::Probability))?;
    if let Some(path) = constructions {
        let cs: Vec<LicensedConstruction> = read_jsonl(&path)?;
        let buckets = bucket_by_distance(&scores, &cs, &edges).map_err(|e| usage(e.to_string()))?;
        emit("buckets_perplexity.csv", bucket_csv(&buckets, Metric::Perplexity))?;
        emit("buckets_probability.csv", bucket_csv(&buckets, Metric::Probability))?;
        m.inputs.push(path);
    }
    m.write(s, &out.join("manifest.json"))
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
            parse_config(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => BTreeMap::new(),
    };
    let mut s = Settings {
        command: cli.command.name(),
        file,
        resolved: BTreeMap::new(),
    };
    match cli.command {
        Command::Synth(a) => synth(a, &mut s),
        Command::Extract(a) => extract(a, &mut s),
        Command::Rewrite(a) => rewrite(a, &mut s),
        Command::Annotate(a) => annotate(a, &mut s),
        Command::TrainLm(a) => train(a, &mut s),
        Command::Score(a) => score(a, &mut s),
        Command::Probe(a) => probe(a, &mut s),
        Command::Report(a) => report(a, &mut s),
    }
}

/// Exit status for an error: usage, numerical or (otherwise) data.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(LmError::DivergenceDetected { .. }) = cause.downcast_ref::<LmError>() {
            return EXIT_NUMERICAL;
        }
        if let Some(ProbeError::NonFinite(_)) = cause.downcast_ref::<ProbeError>() {
            return EXIT_NUMERICAL;
        }
    }
    EXIT_DATA
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_lines() {
        let cfg = parse_config("# header\n\nsynth.seed = 4  # trailing\ntrain_lm.epochs=2\n").unwrap();
        assert_eq!(cfg.get("synth.seed").unwrap(), "4");
        assert_eq!(cfg.get("train-lm.epochs").unwrap(), "2");
        assert_eq!(cfg.len(), 2);
    }

    #[test]
    fn config_errors_name_the_field() {
        let e = parse_config("synth.sed = 4\n").unwrap_err();
        assert!(e.to_string().contains("synth.sed"), "{e}");
        assert_eq!(exit_code(&e), EXIT_USAGE);
        assert!(parse_config("synth.seed 4\n").unwrap_err().to_string().contains("line 1"));
        assert!(parse_config("synth.n = 1\nsynth.n = 2\n").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut s = Settings {
            command: "synth",
            file: parse_config("synth.seed = 4\nsynth.n = 10\n").unwrap(),
            resolved: BTreeMap::new(),
        };
        assert_eq!(s.get("seed", Some(9u64), 1).unwrap(), 9);
        assert_eq!(s.get("n", None, 1usize).unwrap(), 10);
        assert_eq!(s.get("negative-fraction", None, 0.5f64).unwrap(), 0.5);
        assert_eq!(s.seeds().get("seed"), Some(&"9"));
        let mut bad = Settings {
            command: "synth",
            file: parse_config("synth.n = many\n").unwrap(),
            resolved: BTreeMap::new(),
        };
        let e = bad.get("n", None, 1usize).unwrap_err();
        assert!(e.to_string().contains("synth.n"));
    }

    #[test]
    fn config_hash_depends_on_settings_only() {
        let make = |seed: u64| {
            let mut s = Settings {
                command: "synth",
                file: BTreeMap::new(),
                resolved: BTreeMap::new(),
            };
            s.get("seed", Some(seed), 0).unwrap();
            s.hash()
        };
        assert_eq!(make(3), make(3));
        assert_ne!(make(3), make(4));
    }

    #[test]
    fn error_classes() {
        let e: anyhow::Error = LmError::DivergenceDetected { epoch: 1 }.into();
        assert_eq!(exit_code(&e.context("training")), EXIT_NUMERICAL);
        let e: anyhow::Error = ProbeError::NonFinite("loss").into();
        assert_eq!(exit_code(&e), EXIT_NUMERICAL);
        let e: anyhow::Error = LmError::EmptyCorpus.into();
        assert_eq!(exit_code(&e), EXIT_DATA);
    }

    #[test]
    fn bucket_edges_parse() {
        assert_eq!(parse_edges("2, 3,5").unwrap(), vec![2, 3, 5]);
        assert!(parse_edges("2,x").is_err());
    }
}
