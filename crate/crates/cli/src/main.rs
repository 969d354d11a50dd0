//! `saam`: dataset preparation, training, evaluation, attribution export,
//! snippet extraction and the gradient self-test.

mod commands;
mod data;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use saam_core::attribution::{Polarity, DEFAULT_MARGIN, DEFAULT_TAU};
use saam_core::tensor::OpKind;
use saam_core::Variant;

#[derive(Parser, Debug)]
#[command(name = "saam", version = env!("SAAM_BUILD_VERSION"), about = "Sentence-level aspect attribution for review ratings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter and split a corpus, build the vocabulary and silver labels.
    Prepare(PrepareArgs),
    /// Write a synthetic corpus with gold sentence labels.
    Synth(SynthArgs),
    /// Train a model from a prepared data directory.
    Train(TrainArgs),
    /// Rating metrics and attribution accuracy on a split.
    Eval(EvalArgs),
    /// Per-sentence aspect attribution dump.
    Attribute(AttributeArgs),
    /// Extract rating-explaining sentences.
    Snippets(SnippetArgs),
    /// Gradient checks of every op and model, plus head oracles.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// JSONL corpus, one review per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `hotel`, `beer` or a comma-separated list of aspect names.
    #[arg(long, default_value = "hotel")]
    pub aspects: String,
    /// Keep reviews with at least this many sentences.
    #[arg(long, default_value_t = 4)]
    pub min_sentences: usize,
    /// Dev documents taken from train [default: min(1000, train/10)].
    #[arg(long)]
    pub dev_size: Option<usize>,
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Silver sentence labels from section prefixes (`beer`).
    #[arg(long)]
    pub keyword_scheme: Option<String>,
    /// Drop tokens seen fewer times in the training split.
    #[arg(long, default_value_t = 1)]
    pub min_frequency: u64,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output JSONL corpus.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 4)]
    pub num_aspects: usize,
    /// Probability that a keyword is drawn from the shared pool.
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
    /// Extra sentences that concern no aspect.
    #[arg(long, default_value_t = 0)]
    pub filler_sentences: usize,
    #[arg(long, default_value_t = 1)]
    pub sentences_per_aspect: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// TOML training configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory written by `saam prepare`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Head variant: C1, C2, R, flat-c or flat-r.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `max_epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Overrides `learning_rate`.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Overrides `batch_size`.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Overrides `patience`.
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ModelInput {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Vocabulary file [default: vocab.tsv next to the data file].
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelInput,
    /// Split file to score.
    #[arg(long)]
    pub split: PathBuf,
    /// JSONL of `{doc_id, sentence_labels}`; overrides labels in the split.
    #[arg(long)]
    pub attribution_labels: Option<PathBuf>,
    /// Assert the checkpoint's task.
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// Output directory for metrics.txt and metrics.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub model: ModelInput,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output JSONL, one line per sentence.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["aspect", "explain"])))]
pub struct SnippetArgs {
    #[command(flatten)]
    pub model: ModelInput,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub aspect: Option<String>,
    /// One snippet per aspect whose rating departs from the overall rating.
    #[arg(long)]
    pub explain: bool,
    #[arg(long, default_value = "lowest", value_parser = parse_polarity)]
    pub polarity: Polarity,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Minimum rating gap for `--explain`.
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    pub margin: f64,
    /// Allow classification checkpoints, scoring by expected class value.
    #[arg(long)]
    pub class_proxy: bool,
    /// Output JSONL of snippet records.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Directory for the report and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, hide = true, value_parser = parse_op)]
    pub inject_fault: Option<OpKind>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: saam_core::Error| e.to_string())
}

fn parse_polarity(s: &str) -> Result<Polarity, String> {
    s.parse().map_err(|e: saam_core::Error| e.to_string())
}

fn parse_op(s: &str) -> Result<OpKind, String> {
    s.parse().map_err(|e: saam_core::Error| e.to_string())
}

/// Bad flags or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A self-test or numeric check failed.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<NumericFailure>() {
            return EXIT_NUMERIC;
        }
        if let Some(e) = cause.downcast_ref::<saam_core::Error>() {
            return match e {
                saam_core::Error::Config(_) => EXIT_USAGE,
                saam_core::Error::NonFinite { .. }
                | saam_core::Error::Numeric { .. }
                | saam_core::Error::Divergence { .. } => EXIT_NUMERIC,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Attribute(a) => commands::attribute::run(a),
        Command::Snippets(a) => commands::snippets::run(a),
        Command::Selftest(a) => commands::selftest::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
