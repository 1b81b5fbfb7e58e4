//! Argument parsing and subcommand dispatch.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use defhyper::baselines::{BaselineKind, BaselineModel};
use defhyper::cograph::parse_tag_sets;
use defhyper::corpus::{synth_generate, Corpus, Definition, SynthConfig};
use defhyper::eval::{pos_position_stats, score_definitions, sweep, sweep_to_csv, Metrics, SweepAxis};
use defhyper::model::{AnyModel, HypernymModel, Mode, ModelConfig, Prediction};

use crate::fetch::{fetch_tags, parse_tag_list, FetchOptions, ThreadSleeper, UreqTransport};

#[derive(Debug, Parser)]
#[command(name = "defhyper", version, about = "Hypernym extraction from definition sentences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Preprocess a raw JSONL file into a corpus, reporting rejected lines
    Prepare(PrepareArgs),
    /// Train a neural model
    Train(TrainArgs),
    /// Score a model on an annotated corpus
    Eval(EvalArgs),
    /// Print candidate probabilities and the selected hypernym for one sentence
    Predict(PredictArgs),
    /// PoS position statistics around hypernym and non-hypernym nouns
    Stats(StatsArgs),
    /// Train and score one model per value of a hyperparameter
    Sweep(SweepArgs),
    /// Train a traditional classifier on integer-encoded windows
    Baseline(BaselineArgs),
    /// Download Stack Overflow tag wiki excerpts as raw records
    FetchSo(FetchArgs),
    /// Generate a synthetic annotated corpus
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long, default_value = "pos")]
    pub mode: Mode,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    /// Top-K word list size (required by hybrid modes, caps word mode)
    #[arg(long)]
    pub topk: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub embedding_dim: usize,
    /// Skip the refinement stage; predictions use the stage-1 probabilities
    #[arg(long)]
    pub no_refine: bool,
}

impl ModelFlags {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            mode: self.mode,
            window: self.window,
            hidden: self.hidden,
            topk: self.topk,
            embedding_dim: self.embedding_dim,
            dropout: self.dropout,
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            threshold: self.threshold,
            refine: !self.no_refine,
            ..ModelConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the rejected lines, one per row
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Per-epoch loss CSV (defaults to `<output stem>.loss.csv`)
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Extra co-tag groups for the co-occurrence graph, one group per line
    #[arg(long)]
    pub tag_sets: Option<PathBuf>,
    /// Train on the first part of a seeded split instead of the whole corpus
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Override the model's selection threshold
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Score only the held-out part of a seeded split
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Per-definition TSV: term, predicted, gold, correct
    #[arg(long)]
    pub details: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Definition sentence; read from standard input when absent
    #[arg(long)]
    pub sentence: Option<String>,
    /// The defined term, excluded from the candidates (defaults to the first token)
    #[arg(long)]
    pub term: Option<String>,
    /// Whitespace-separated Penn tags, one per token; the built-in tagger runs otherwise
    #[arg(long)]
    pub tags: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Use the whole corpus instead of the training split
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// window, hidden or train-ratio
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values, e.g. 2,3,4
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_frac: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub kind: BaselineKind,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub tag_sets: Option<PathBuf>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// Tag list: one co-tag group per line
    #[arg(long)]
    pub tags: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, env = "DEFHYPER_CACHE", default_value = ".defhyper-cache")]
    pub cache_dir: PathBuf,
    /// Serve only from the cache
    #[arg(long)]
    pub offline: bool,
    /// Pre-fill `hypernym` with the first noun after "is a/an/the" (for review)
    #[arg(long)]
    pub annotate_pattern: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 5000)]
    pub records: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub singleton_fraction: Option<f64>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub hypernyms: Option<usize>,
    #[arg(long)]
    pub zipf: Option<f64>,
}

/// A failure that should exit with the usage code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

pub fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Stats(a) => stats(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Baseline(a) => baseline(a),
        Command::FetchSo(a) => fetch_so(a),
        Command::Synth(a) => synth(a),
    }
    .map(|()| ExitCode::SUCCESS)
    .or_else(|e| match e.downcast::<Partial>() {
        Ok(p) => {
            eprintln!("error: {}", p.0);
            Ok(ExitCode::FAILURE)
        }
        Err(e) => Err(e),
    })
}

/// Output was written but is incomplete.
#[derive(Debug)]
struct Partial(String);

impl std::fmt::Display for Partial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Partial {}

fn validated(config: ModelConfig) -> Result<ModelConfig> {
    config.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(config)
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let (corpus, rejected) = Corpus::load(path).with_context(|| format!("loading {}", path.display()))?;
    if !rejected.is_empty() {
        eprintln!("warning: {} line(s) of {} rejected", rejected.len(), path.display());
    }
    Ok(corpus)
}

fn train_part(corpus: Corpus, fraction: Option<f64>, seed: u64) -> Result<Corpus> {
    match fraction {
        Some(f) => Ok(corpus.split(f, seed)?.0),
        None => Ok(corpus),
    }
}

fn read_tag_sets(path: Option<&Path>) -> Result<Vec<Vec<String>>> {
    match path {
        Some(p) => Ok(parse_tag_sets(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )),
        None => Ok(Vec::new()),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let (corpus, rejected) = Corpus::load(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    corpus.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    let mut report = String::new();
    for r in &rejected {
        let _ = writeln!(report, "{r}");
        eprintln!("rejected {r}");
    }
    if let Some(p) = &a.rejects {
        write(p, &report)?;
    }
    if corpus.is_empty() {
        eprintln!("warning: the prepared corpus is empty");
    }
    println!("loaded {} definition(s), rejected {}", corpus.len(), rejected.len());
    Ok(())
}

pub fn loss_csv(model: &HypernymModel) -> String {
    let mut out = String::from("stage,epoch,loss\n");
    for (name, losses) in [("stage1", &model.history.stage1_loss), ("refine", &model.history.refine_loss)] {
        for (k, l) in losses.iter().enumerate() {
            let _ = writeln!(out, "{name},{},{l}", k + 1);
        }
    }
    out
}

fn default_loss_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    output.with_file_name(format!("{stem}.loss.csv"))
}

fn train(a: TrainArgs) -> Result<()> {
    let config = validated(a.model.config())?;
    let corpus = train_part(load_corpus(&a.corpus)?, a.train_frac, config.seed)?;
    let extra = read_tag_sets(a.tag_sets.as_deref())?;
    let model = HypernymModel::train_with_tag_sets(&corpus, &config, &extra)?;
    model.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    let loss_path = a.loss_log.unwrap_or_else(|| default_loss_path(&a.output));
    write(&loss_path, &loss_csv(&model))?;
    println!(
        "trained {} model on {} definition(s); final stage-1 loss {:.6}",
        config.mode,
        corpus.len(),
        model.history.stage1_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn metrics_csv(m: &Metrics) -> String {
    format!(
        "precision,recall,f1,predicted,correct,total_gold\n{:.4},{:.4},{:.4},{},{},{}\n",
        m.precision, m.recall, m.f1, m.predicted, m.correct, m.total_gold
    )
}

pub fn details_tsv(preds: &[Prediction], definitions: &[Definition]) -> String {
    let mut out = String::from("term\tpredicted\tgold\tcorrect\n");
    for (p, d) in preds.iter().zip(definitions) {
        let correct = p.selected.is_some_and(|s| d.is_gold(s));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            d.term,
            p.selected_word().unwrap_or(""),
            d.gold_word().unwrap_or(""),
            correct
        );
    }
    out
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut model = AnyModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    if let Some(t) = a.threshold {
        model.set_threshold(t).map_err(|e| Usage(e.to_string()))?;
    }
    let corpus = load_corpus(&a.corpus)?;
    let test = match a.train_frac {
        Some(f) => corpus.split(f, a.seed)?.1,
        None => corpus,
    };
    let preds = model.predict_all(&test.definitions)?;
    let metrics = score_definitions(&preds, &test.definitions)?;
    if let Some(p) = &a.metrics {
        write(p, &metrics_csv(&metrics))?;
    }
    if let Some(p) = &a.details {
        write(p, &details_tsv(&preds, &test.definitions))?;
    }
    println!("{}: {metrics}", model.kind());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut model = AnyModel::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    if let Some(t) = a.threshold {
        model.set_threshold(t).map_err(|e| Usage(e.to_string()))?;
    }
    let sentence = match a.sentence {
        Some(s) => s,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let tokens: Vec<String> = sentence.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        bail!(Usage("empty sentence".into()));
    }
    let tags: Option<Vec<String>> = a.tags.map(|t| t.split_whitespace().map(String::from).collect());
    let term = a.term.unwrap_or_else(|| tokens[0].clone());
    let definition = Definition::unannotated(&term, &tokens, tags.as_deref())
        .map_err(|issue| Usage(issue.reason().to_string()))?;
    let pred = model
        .predict_all(std::slice::from_ref(&definition))?
        .pop()
        .expect("one prediction per definition");
    println!("position\tword\tp_init\tp_final");
    for c in &pred.candidates {
        println!("{}\t{}\t{:.4}\t{:.4}", c.position, c.word, c.p_init, c.p_final);
    }
    println!("selected: {}", pred.selected_word().unwrap_or("none"));
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let data = if a.all {
        corpus
    } else {
        corpus.split(a.train_frac, a.seed)?.0
    };
    write_or_print(a.output.as_deref(), &pos_position_stats(&data.definitions).to_csv())
}

fn run_sweep(a: SweepArgs) -> Result<()> {
    let config = validated(a.model.config())?;
    let corpus = load_corpus(&a.corpus)?;
    let rows = sweep(a.axis, &a.values, &config, &corpus, a.train_frac, config.seed)?;
    for r in &rows {
        if let Err(e) = &r.outcome {
            eprintln!("warning: value {} failed: {e}", r.value);
        }
    }
    write_or_print(a.output.as_deref(), &sweep_to_csv(&rows))
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let corpus = train_part(load_corpus(&a.corpus)?, a.train_frac, a.seed)?;
    let extra = read_tag_sets(a.tag_sets.as_deref())?;
    let model = BaselineModel::train_with_tag_sets(&corpus, a.kind, a.window, a.threshold, &extra)?;
    model.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    println!("trained {} on {} definition(s)", a.kind.as_str(), corpus.len());
    Ok(())
}

fn fetch_so(a: FetchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.tags).with_context(|| format!("reading {}", a.tags.display()))?;
    let tags = parse_tag_list(&text);
    if tags.is_empty() {
        eprintln!("warning: no tags in {}", a.tags.display());
    }
    let options = FetchOptions {
        cache_dir: a.cache_dir,
        offline: a.offline,
        annotate: a.annotate_pattern,
    };
    let report = fetch_tags(&tags, &options, &mut UreqTransport::default(), &mut ThreadSleeper)?;
    let mut out = String::new();
    for r in &report.records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    write(&a.output, &out)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {} record(s) for {} tag(s)", report.records.len(), tags.len());
    if report.quota_exhausted {
        bail!(Partial("API quota exhausted; output is partial".into()));
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config = SynthConfig {
        records: a.records,
        ..SynthConfig::default()
    };
    if let Some(v) = a.singleton_fraction {
        config.singleton_fraction = v;
    }
    if let Some(v) = a.vocab_size {
        config.vocab_size = v;
    }
    if let Some(v) = a.hypernyms {
        config.hypernyms = v;
    }
    if let Some(v) = a.zipf {
        config.zipf_exponent = v;
    }
    let corpus = synth_generate(&config, a.seed).map_err(|e| Usage(e.to_string()))?;
    corpus.save(&a.output).with_context(|| format!("writing {}", a.output.display()))?;
    println!("wrote {} synthetic definition(s)", corpus.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn hybrid_without_topk_is_a_usage_error() {
        let cli = Cli::try_parse_from([
            "defhyper", "train", "--corpus", "c", "--output", "m", "--mode", "hybrid-embed",
        ])
        .unwrap();
        let err = run(cli.command).unwrap_err();
        assert!(err.downcast_ref::<Usage>().is_some(), "{err:#}");
    }

    #[test]
    fn loss_path_sits_next_to_model() {
        assert_eq!(default_loss_path(Path::new("out/m.json")), Path::new("out/m.loss.csv"));
    }

    #[test]
    fn details_mark_abstentions() {
        let d = Definition::unannotated("x", &["x".into(), "is".into(), "a".into(), "tool".into()], None).unwrap();
        let p = Prediction::select(Vec::new(), 0.5);
        assert_eq!(details_tsv(&[p], &[d]), "term\tpredicted\tgold\tcorrect\nx\t\t\tfalse\n");
    }
}
