//! `slm`: encode, train, order, evaluate and ablate from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod commands;
mod config;
mod meta;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slm_core::{Backbone, CorpusFormat, ScorerKind, Strategy};

/// Input or configuration problem detected by the command line layer.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

#[derive(Parser)]
#[command(name = "slm", version, about = "Sentence ordering with a sentence-level language model")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a corpus with the toy bag-of-words encoder.
    Encode(EncodeArgs),
    /// Train a model on gold-ordered embeddings.
    Train(TrainArgs),
    /// Shuffle each story and predict its order.
    Order(OrderArgs),
    /// Score predictions against the gold corpus.
    Evaluate(EvaluateArgs),
    /// Run the encoder × model × search grid.
    Ablate(AblateArgs),
    /// Write a templated synthetic corpus.
    Synth(SynthArgs),
}

/// Which part of the seeded train/validation/test split to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    All,
    Train,
    Validation,
    Test,
}

#[derive(Args)]
pub struct EncodeArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// csv-roc or jsonl; guessed from the extension when absent.
    #[arg(long)]
    format: Option<CorpusFormat>,
    #[arg(long)]
    dim: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    embeddings: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV; defaults to the checkpoint path with `.loss.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Continue from this checkpoint; epoch numbering carries on.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "train")]
    part: Part,
    #[arg(long)]
    backbone: Option<Backbone>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
}

#[derive(Args)]
pub struct OrderArgs {
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Required by the lm-cosine scorer.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// brute-force or nn
    #[arg(long)]
    strategy: Option<Strategy>,
    /// lm-cosine, ngram-overlap, cbow-cosine (or oracle, for checks)
    #[arg(long)]
    scorer: Option<ScorerKind>,
    #[arg(long, value_enum, default_value = "all")]
    part: Part,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// JSONL written by `order`.
    #[arg(long)]
    predictions: PathBuf,
    /// Gold corpus: story CSV, story JSONL or embedding JSONL.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    gold_format: Option<CorpusFormat>,
    #[arg(long, value_enum, default_value = "all")]
    part: Part,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct AblateArgs {
    /// `name=path` of an embedding file; repeatable. Replaces the config list.
    #[arg(long = "encoder")]
    encoders: Vec<String>,
    /// Comma-separated: universal-transformer, bilstm, cbow-cosine,
    /// ngram-overlap, oracle.
    #[arg(long, value_delimiter = ',')]
    models: Vec<slm_core::ablation::GridModel>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    stories: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    format: Option<CorpusFormat>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<slm_core::Error>() {
            return if e.is_validation() { 2 } else { 1 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<()> {
        let mut cfg = config::load(cli.config.as_deref())?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        match &cli.command {
            Command::Encode(a) => commands::encode(cfg, a),
            Command::Train(a) => commands::train(cfg, a),
            Command::Order(a) => commands::order(cfg, a),
            Command::Evaluate(a) => commands::evaluate(cfg, a),
            Command::Ablate(a) => commands::ablate(cfg, a),
            Command::Synth(a) => commands::synth(cfg, a),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
