//! Subcommands of the `disco` binary.
//!
//! Every command writes its main result as CSV to `--out` (or stdout) and,
//! where it has metrics, a JSON object to `--metrics-out` (or stderr).
//! Outputs are byte-identical for identical inputs and seeds regardless of
//! `--threads`.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use disco::corpus::{self, Corpus, Dictionary, Document, LoadOptions, WordId, WordPair};
use disco::disco::{disco_pipeline, materialize_zeros, DiscoOptions, OversampleParam};
use disco::engine::{derive_seed, JobConfig, Parallelism};
use disco::exact::{cooccurrence, exact_score, oracle_all_pairs, sort_scores, MeasureKind, PairScore};
use disco::experiment::{run_sweep, SweepConfig, SweepRow};
use disco::minhash::{
    choose_k, minhash_all_pairs, minhash_full, minhash_sampled, sampled_shuffle_bound, table_mismatches, HashFamily,
    MinHashOptions,
};
use disco::streamsim::{memory_envelope, StreamState};

pub const SEED_ENV: &str = "DISCO_SEED";

#[derive(Debug, Parser)]
#[command(name = "disco", version, about = "Dimension independent all-pairs similarity")]
pub struct Cli {
    /// Engine worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Print floats with full precision instead of 6 significant digits.
    #[arg(long, global = true)]
    pub precise: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a Zipf-distributed synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Write the D/L-groups corpus where every intra-group pair has similarity 1.
    GenLowerbound(GenLowerboundArgs),
    /// Corpus statistics as JSON.
    Stats(StatsArgs),
    /// Exact all-pairs scores from the brute-force oracle.
    Exact(ExactArgs),
    /// Sampled all-pairs estimates for cosine, dice or overlap.
    Disco(DiscoArgs),
    /// Shuffle size versus error over a grid of oversampling values.
    Sweep(SweepArgs),
    /// Jaccard estimates through full or sampled MinHash.
    Minhash(MinhashArgs),
    /// Streaming cosine with interleaved queries.
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Metrics JSON path; stderr when absent.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus file, one document per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Reject documents with more distinct words than this.
    #[arg(long)]
    pub max_doc_len: Option<usize>,
    /// Keep only the tokens listed in this file (whitespace separated).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub docs: usize,
    #[arg(long)]
    pub dict: usize,
    #[arg(long)]
    pub len: usize,
    #[arg(long, default_value_t = 1.0)]
    pub skew: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GenLowerboundArgs {
    #[arg(long)]
    pub dict: usize,
    #[arg(long)]
    pub group: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "cosine")]
    pub measure: MeasureKind,
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DiscoArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "cosine")]
    pub measure: MeasureKind,
    /// Oversampling parameter p/ε.
    #[arg(long, conflicts_with = "epsilon")]
    pub p_over_eps: Option<f64>,
    /// Similarity threshold ε; sets p/ε = 2 ln(D) / ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Add exact scores and absolute errors.
    #[arg(long)]
    pub with_truth: bool,
    /// Merge emissions per map task before the shuffle.
    #[arg(long)]
    pub combine: bool,
    /// Clamp estimates into [0, 1].
    #[arg(long)]
    pub clamp: bool,
    /// Report exactly these pairs (two tokens per line), zero when not emitted.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub metrics: MetricsArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Synthetic corpus as DOCS,DICT,LEN,SKEW,SEED.
    #[arg(long, conflicts_with = "corpus")]
    pub synth: Option<String>,
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    /// Comma separated p/ε values.
    #[arg(long, value_delimiter = ',')]
    pub p_over_eps: Option<Vec<f64>>,
    /// Comma separated ε grid for the error-above-threshold columns.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    /// Comma separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MinhashArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Number of hash functions.
    #[arg(long, conflicts_with = "epsilon")]
    pub k: Option<usize>,
    /// Threshold ε; sets k = ceil(c_factor / ε).
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub c_factor: f64,
    /// Constant of the sampled emission threshold c·ln(Dk)/#(w).
    #[arg(long, default_value_t = 3.0)]
    pub c: f64,
    /// Use the sampled mapper and compare against the full one.
    #[arg(long)]
    pub sampled: bool,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub with_truth: bool,
    /// Drop pairs whose estimate is below this value.
    #[arg(long, default_value_t = 0.0)]
    pub min_estimate: f64,
    /// Also write the MinHash table as CSV (word, j, min_value, doc_id).
    #[arg(long)]
    pub dump_table: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub metrics: MetricsArgs,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Corpus file read line by line as the stream.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Query script: `position word1 word2` per line, run after `position` documents.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub p_over_eps: f64,
    #[arg(long, default_value = "cosine")]
    pub measure: MeasureKind,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
    #[command(flatten)]
    pub metrics: MetricsArgs,
}

/// Exit code 2 for usage and configuration errors, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = RunContext { parallelism: parallelism(cli.threads), precise: cli.precise };
    match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::GenLowerbound(a) => cmd_gen_lowerbound(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Exact(a) => cmd_exact(&ctx, a),
        Command::Disco(a) => cmd_disco(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Minhash(a) => cmd_minhash(&ctx, a),
        Command::Stream(a) => cmd_stream(&ctx, a),
    }
}

struct RunContext {
    parallelism: Parallelism,
    precise: bool,
}

impl RunContext {
    fn float(&self, x: f64) -> String {
        if self.precise {
            format!("{x}")
        } else {
            format_sig6(x)
        }
    }

    fn job(&self, seed: u64) -> JobConfig {
        JobConfig::new(seed).with_parallelism(self.parallelism)
    }
}

fn parallelism(threads: usize) -> Parallelism {
    match threads {
        1 => Parallelism::Sequential,
        n => Parallelism::Threads(n),
    }
}

/// Six significant digits, trailing zeros kept (`0.577350`, `1.00000`).
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        format!("{x:.5e}")
    } else {
        format!("{:.*}", (5 - magnitude) as usize, x)
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_metrics<T: Serialize>(path: &Option<PathBuf>, metrics: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(metrics).map_err(|e| CliError::Runtime(e.into()))?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display()))?,
        None => eprintln!("{text}"),
    }
    Ok(())
}

fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

fn load(args: &CorpusArgs) -> Result<Corpus, CliError> {
    let vocabulary = match &args.vocab {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read vocabulary {}", p.display()))?;
            Some(text.split_ascii_whitespace().map(str::to_owned).collect::<HashSet<_>>())
        }
        None => None,
    };
    let options = LoadOptions { max_doc_len: args.max_doc_len, vocabulary };
    corpus::load_corpus_with(&args.corpus, &options)
        .with_context(|| format!("cannot load corpus {}", args.corpus.display()))
        .map_err(CliError::Runtime)
}

fn write_corpus(c: &Corpus, out: &Option<PathBuf>) -> Result<(), CliError> {
    let mut w = open_output(out)?;
    c.write_text(&mut w)?;
    Ok(())
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<(), CliError> {
    let c = match corpus::generate_synthetic(a.docs, a.dict, a.len, a.skew, a.seed) {
        Ok(c) => c,
        Err(e) => return usage(e.to_string()),
    };
    write_corpus(&c, &a.output.out)
}

fn cmd_gen_lowerbound(a: GenLowerboundArgs) -> Result<(), CliError> {
    let c = match corpus::generate_lower_bound(a.dict, a.group) {
        Ok(c) => c,
        Err(e) => return usage(e.to_string()),
    };
    write_corpus(&c, &a.output.out)
}

#[derive(Serialize)]
struct StatsReport {
    docs: usize,
    words: usize,
    max_doc_len: usize,
    lines: usize,
    empty_lines_skipped: usize,
    total_postings: u64,
    naive_shuffle_size: u64,
}

fn cmd_stats(a: StatsArgs) -> Result<(), CliError> {
    let c = load(&a.corpus)?;
    let stats = c.load_stats();
    let report = StatsReport {
        docs: c.num_docs(),
        words: c.num_words(),
        max_doc_len: c.max_doc_len(),
        lines: stats.lines,
        empty_lines_skipped: stats.empty_lines_skipped,
        total_postings: c.total_postings(),
        naive_shuffle_size: c.naive_shuffle_size(),
    };
    let mut out = open_output(&a.output.out)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.into()))?;
    writeln!(out, "{text}")?;
    out.flush()?;
    Ok(())
}

fn cmd_exact(ctx: &RunContext, a: ExactArgs) -> Result<(), CliError> {
    if a.threshold.is_nan() || a.threshold < 0.0 {
        return usage("threshold must be >= 0");
    }
    let c = load(&a.corpus)?;
    let scores = oracle_all_pairs(&c, a.measure, a.threshold);
    let mut w = csv_writer(open_output(&a.output.out)?);
    w.write_record(["word1", "word2", "score"])?;
    for s in scores {
        w.write_record([c.token(s.pair.first()), c.token(s.pair.second()), &ctx.float(s.score)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DiscoMetrics {
    measure: MeasureKind,
    p_over_eps: f64,
    seed: u64,
    shuffle_size: u64,
    combined_shuffle_size: Option<u64>,
    max_reduce_key: u64,
    num_keys: u64,
    naive_shuffle_size: u64,
}

fn read_pairs(c: &Corpus, path: &Path) -> Result<Vec<WordPair>, CliError> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<&str> = line.split(|ch: char| ch == ',' || ch.is_ascii_whitespace()).filter(|t| !t.is_empty()).collect();
        match toks.as_slice() {
            [] => continue,
            [x, y] => {
                let id = |t: &str| c.dictionary().get(t).ok_or_else(|| anyhow!("{}:{}: unknown word `{t}`", path.display(), i + 1));
                pairs.push(WordPair::new(id(x)?, id(y)?));
            }
            _ => return usage(format!("{}:{}: expected two words", path.display(), i + 1)),
        }
    }
    Ok(pairs)
}

fn cmd_disco(ctx: &RunContext, a: DiscoArgs) -> Result<(), CliError> {
    if a.measure == MeasureKind::Jaccard {
        return usage("jaccard is estimated by the minhash subcommand");
    }
    let c = load(&a.corpus)?;
    let param = match (a.p_over_eps, a.epsilon) {
        (Some(v), _) => OversampleParam::new(v),
        (None, Some(eps)) => OversampleParam::from_threshold(eps, c.num_words()),
        (None, None) => return usage("one of --p-over-eps or --epsilon is required"),
    };
    let param = match param {
        Ok(p) => p,
        Err(e) => return usage(e.to_string()),
    };
    let options = DiscoOptions { job: ctx.job(a.seed), combine: a.combine, clamp: a.clamp };
    let out = disco_pipeline(&c, a.measure, param, &options).map_err(|e| CliError::Runtime(e.into()))?;

    let rows: Vec<PairScore> = match &a.pairs {
        Some(p) => materialize_zeros(&out, &read_pairs(&c, p)?),
        None => {
            let mut v = out.scores.clone();
            sort_scores(&mut v);
            v
        }
    };
    let truth = a.with_truth.then(|| cooccurrence(&c));

    let mut w = csv_writer(open_output(&a.output.out)?);
    if truth.is_some() {
        w.write_record(["word1", "word2", "estimate", "truth", "abs_error"])?;
    } else {
        w.write_record(["word1", "word2", "estimate"])?;
    }
    for s in &rows {
        let (x, y) = (s.pair.first(), s.pair.second());
        let mut rec = vec![c.token(x).to_string(), c.token(y).to_string(), ctx.float(s.score)];
        if let Some(counts) = &truth {
            let xy = counts.get(&s.pair).copied().unwrap_or(0);
            let t = exact_score(a.measure, xy, c.count(x), c.count(y)).map_err(|e| CliError::Runtime(e.into()))?;
            rec.push(ctx.float(t));
            rec.push(ctx.float((s.score - t).abs()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    write_metrics(
        &a.metrics.metrics_out,
        &DiscoMetrics {
            measure: a.measure,
            p_over_eps: param.value(),
            seed: a.seed,
            shuffle_size: out.metrics.shuffle_size,
            combined_shuffle_size: out.metrics.combined_shuffle_size,
            max_reduce_key: out.metrics.max_reduce_key,
            num_keys: out.metrics.num_keys,
            naive_shuffle_size: c.naive_shuffle_size(),
        },
    )
}

/// Sweep settings as read from a TOML file. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    pub corpus: Option<PathBuf>,
    pub synthetic: Option<SynthSpec>,
    pub measure: Option<String>,
    pub p_over_eps: Option<Vec<f64>>,
    pub thresholds: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub docs: usize,
    pub dict: usize,
    pub len: usize,
    pub skew: f64,
    pub seed: u64,
}

impl std::str::FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [docs, dict, len, skew, seed] = parts.as_slice() else {
            return Err(format!("expected DOCS,DICT,LEN,SKEW,SEED, got `{s}`"));
        };
        let bad = |what: &str| format!("bad {what} in `{s}`");
        Ok(SynthSpec {
            docs: docs.parse().map_err(|_| bad("docs"))?,
            dict: dict.parse().map_err(|_| bad("dict"))?,
            len: len.parse().map_err(|_| bad("len"))?,
            skew: skew.parse().map_err(|_| bad("skew"))?,
            seed: seed.parse().map_err(|_| bad("seed"))?,
        })
    }
}

enum CorpusSource {
    Path(PathBuf),
    Synthetic(SynthSpec),
}

const DEFAULT_SWEEP: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const DEFAULT_THRESHOLDS: [f64; 5] = [0.1, 0.2, 0.4, 0.6, 0.8];
const DEFAULT_DELTA: f64 = 0.5;

fn cmd_sweep(ctx: &RunContext, a: SweepArgs) -> Result<(), CliError> {
    let file: SweepFile = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            match toml::from_str(&text) {
                Ok(f) => f,
                Err(e) => return usage(format!("{}: {e}", p.display())),
            }
        }
        None => SweepFile::default(),
    };
    let source = match (&a.corpus, &a.synth) {
        (Some(p), _) => CorpusSource::Path(p.clone()),
        (None, Some(s)) => match s.parse() {
            Ok(spec) => CorpusSource::Synthetic(spec),
            Err(e) => return usage(e),
        },
        (None, None) => match (file.corpus.clone(), file.synthetic) {
            (Some(p), None) => CorpusSource::Path(p),
            (None, Some(s)) => CorpusSource::Synthetic(s),
            (Some(_), Some(_)) => return usage("config sets both `corpus` and `synthetic`"),
            (None, None) => return usage("no corpus: pass --corpus, --synth or set one in the config"),
        },
    };
    let measure = match (a.measure, &file.measure) {
        (Some(m), _) => m,
        (None, Some(name)) => match name.parse() {
            Ok(m) => m,
            Err(e) => return usage(format!("{e}")),
        },
        (None, None) => MeasureKind::Cosine,
    };
    let config = SweepConfig {
        measure,
        p_over_eps: a.p_over_eps.or(file.p_over_eps).unwrap_or_else(|| DEFAULT_SWEEP.to_vec()),
        thresholds: a.thresholds.or(file.thresholds).unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec()),
        seeds: a.seeds.or(file.seeds).unwrap_or_else(|| vec![0]),
        delta: a.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
        parallelism: ctx.parallelism,
    };
    if let Err(e) = config.validate() {
        return usage(e.to_string());
    }
    let c = match source {
        CorpusSource::Path(p) => load(&CorpusArgs { corpus: p, max_doc_len: None, vocab: None })?,
        CorpusSource::Synthetic(s) => match corpus::generate_synthetic(s.docs, s.dict, s.len, s.skew, s.seed) {
            Ok(c) => c,
            Err(e) => return usage(e.to_string()),
        },
    };
    let rows = run_sweep(&c, &config).map_err(|e| CliError::Runtime(e.into()))?;
    write_sweep(ctx, &config, &rows, open_output(&a.output.out)?)
}

fn write_sweep(ctx: &RunContext, config: &SweepConfig, rows: &[SweepRow], out: Box<dyn Write>) -> Result<(), CliError> {
    let mut w = csv_writer(out);
    let mut header: Vec<String> = [
        "p_over_eps",
        "seeds",
        "mean_shuffle_size",
        "naive_shuffle_size",
        "shuffle_ratio",
        "mean_rel_error",
        "frac_rel_error_gt_delta",
        "mean_max_reduce_key",
        "mean_key_load",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(config.thresholds.iter().map(|e| format!("err_ge_{e}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            format!("{}", r.p_over_eps),
            r.seeds.to_string(),
            ctx.float(r.mean_shuffle_size),
            r.naive_shuffle_size.to_string(),
            ctx.float(r.shuffle_ratio),
            ctx.float(r.mean_rel_error),
            ctx.float(r.frac_rel_error_above_delta),
            ctx.float(r.mean_max_reduce_key),
            ctx.float(r.mean_key_load),
        ];
        rec.extend(r.threshold_errors.iter().map(|(_, e)| e.map(|v| ctx.float(v)).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MinhashMetrics {
    k: usize,
    c: f64,
    seed: u64,
    dict_size: usize,
    sampled: bool,
    emissions_full: u64,
    emissions_sampled: Option<u64>,
    sampled_shuffle_bound: Option<f64>,
    mismatched_rows: Option<usize>,
}

fn cmd_minhash(ctx: &RunContext, a: MinhashArgs) -> Result<(), CliError> {
    let k = match (a.k, a.epsilon) {
        (Some(k), _) => k,
        (None, Some(eps)) => match choose_k(eps, a.c_factor) {
            Ok(k) => k,
            Err(e) => return usage(e.to_string()),
        },
        (None, None) => return usage("one of --k or --epsilon is required"),
    };
    let family = match HashFamily::with_constant(k, a.seed, a.c) {
        Ok(f) => f,
        Err(e) => return usage(e.to_string()),
    };
    let c = load(&a.corpus)?;
    let options = MinHashOptions { job: ctx.job(a.seed), combine: false };
    let full = minhash_full(&c, &family, &options).map_err(|e| CliError::Runtime(e.into()))?;
    let sampled = if a.sampled {
        Some(minhash_sampled(&c, &family, &options).map_err(|e| CliError::Runtime(e.into()))?)
    } else {
        None
    };
    let table = sampled.as_ref().map(|s| &s.table).unwrap_or(&full.table);
    let estimates = minhash_all_pairs(table, a.min_estimate);
    let truth = a.with_truth.then(|| cooccurrence(&c));

    let mut w = csv_writer(open_output(&a.output.out)?);
    let mut header = vec!["word1", "word2", "estimate"];
    if a.sampled {
        header.push("full_estimate");
    }
    if truth.is_some() {
        header.extend(["truth", "abs_error"]);
    }
    w.write_record(&header)?;
    for s in &estimates {
        let (x, y) = (s.pair.first(), s.pair.second());
        let mut rec = vec![c.token(x).to_string(), c.token(y).to_string(), ctx.float(s.score)];
        if a.sampled {
            let f = disco::minhash::jaccard_estimate(&full.table, x, y).map_err(|e| CliError::Runtime(e.into()))?;
            rec.push(ctx.float(f));
        }
        if let Some(counts) = &truth {
            let xy = counts.get(&s.pair).copied().unwrap_or(0);
            let t = exact_score(MeasureKind::Jaccard, xy, c.count(x), c.count(y)).map_err(|e| CliError::Runtime(e.into()))?;
            rec.push(ctx.float(t));
            rec.push(ctx.float((s.score - t).abs()));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;

    if let Some(path) = &a.dump_table {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut t = csv_writer(Box::new(BufWriter::new(file)));
        t.write_record(["word", "j", "min_value", "doc_id"])?;
        for (word, j, e) in table.entries() {
            t.write_record([c.token(word).to_string(), j.to_string(), format!("{}", e.value), e.doc_id.to_string()])?;
        }
        t.flush()?;
    }

    write_metrics(
        &a.metrics.metrics_out,
        &MinhashMetrics {
            k,
            c: a.c,
            seed: a.seed,
            dict_size: c.num_words(),
            sampled: a.sampled,
            emissions_full: full.metrics.shuffle_size,
            emissions_sampled: sampled.as_ref().map(|s| s.metrics.shuffle_size),
            sampled_shuffle_bound: a.sampled.then(|| sampled_shuffle_bound(c.num_words(), &family)),
            mismatched_rows: sampled.as_ref().map(|s| table_mismatches(&full.table, &s.table)),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamQuery {
    pub position: u64,
    pub x: String,
    pub y: String,
}

pub fn parse_queries(text: &str) -> Result<Vec<StreamQuery>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = line.split(|ch: char| ch == ',' || ch.is_ascii_whitespace()).filter(|t| !t.is_empty()).collect();
        match toks.as_slice() {
            [] => continue,
            [pos, x, y] => {
                let position = pos.parse().map_err(|_| format!("line {}: bad position `{pos}`", i + 1))?;
                out.push(StreamQuery { position, x: x.to_string(), y: y.to_string() });
            }
            _ => return Err(format!("line {}: expected `position word1 word2`", i + 1)),
        }
    }
    // Stable: queries at one position keep their file order.
    out.sort_by_key(|q| q.position);
    Ok(out)
}

#[derive(Serialize)]
struct StreamReport {
    measure: MeasureKind,
    p_over_eps: f64,
    seed: u64,
    docs: u64,
    words_seen: usize,
    max_doc_len: usize,
    memory: u64,
    memory_envelope: f64,
}

fn cmd_stream(ctx: &RunContext, a: StreamArgs) -> Result<(), CliError> {
    let param = match OversampleParam::new(a.p_over_eps) {
        Ok(p) => p,
        Err(e) => return usage(e.to_string()),
    };
    if a.measure == MeasureKind::Jaccard {
        return usage("the streaming model supports cosine, dice and overlap");
    }
    let script = fs::read_to_string(&a.queries).with_context(|| format!("cannot read {}", a.queries.display()))?;
    let queries = match parse_queries(&script) {
        Ok(q) => q,
        Err(e) => return usage(format!("{}: {e}", a.queries.display())),
    };
    let reader = BufReader::new(File::open(&a.corpus).with_context(|| format!("cannot open {}", a.corpus.display()))?);

    let mut state = StreamState::with_measure(a.measure, param, a.seed).map_err(|e| CliError::Runtime(e.into()))?;
    let mut dict = Dictionary::new();
    let mut max_len = 0usize;
    let mut w = csv_writer(open_output(&a.output.out)?);
    w.write_record(["position", "word1", "word2", "estimate"])?;
    let mut next = 0usize;
    let mut answer = |state: &StreamState, dict: &Dictionary, w: &mut csv::Writer<Box<dyn Write>>, upto: u64| -> Result<(), CliError> {
        while next < queries.len() && queries[next].position <= upto {
            let q = &queries[next];
            let lookup = |t: &str| dict.get(t).filter(|&id| state.count(id) > 0);
            let value = match (lookup(&q.x), lookup(&q.y)) {
                (Some(x), Some(y)) => {
                    match state.query_seeded(x, y, derive_seed(a.seed, next as u64)) {
                        Ok(v) => ctx.float(v),
                        Err(e) => format!("error: {e}"),
                    }
                }
                (None, _) => format!("error: unseen word `{}`", q.x),
                (_, None) => format!("error: unseen word `{}`", q.y),
            };
            w.write_record([q.position.to_string(), q.x.clone(), q.y.clone(), value])?;
            next += 1;
        }
        Ok(())
    };
    answer(&state, &dict, &mut w, 0)?;
    for line in reader.lines() {
        let line = line?;
        let ids: Vec<WordId> = line.split_ascii_whitespace().map(|t| dict.intern(t)).collect();
        if ids.is_empty() {
            continue;
        }
        let doc = Document::new(state.docs_seen() as u32, ids);
        max_len = max_len.max(doc.len());
        state.update(&doc);
        answer(&state, &dict, &mut w, state.docs_seen())?;
    }
    answer(&state, &dict, &mut w, u64::MAX)?;
    w.flush()?;

    write_metrics(
        &a.metrics.metrics_out,
        &StreamReport {
            measure: a.measure,
            p_over_eps: param.value(),
            seed: a.seed,
            docs: state.docs_seen(),
            words_seen: state.words_seen(),
            max_doc_len: max_len,
            memory: state.memory(),
            memory_envelope: memory_envelope(param, max_len, state.words_seen(), state.docs_seen()),
        },
    )
}
