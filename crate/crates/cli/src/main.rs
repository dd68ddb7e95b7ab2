mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clinfix_core::RunMode;

use crate::settings::Settings;

/// Detect and correct single-word errors in clinical notes.
#[derive(Debug, Parser)]
#[command(name = "clinfix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the detectors and index the training pairs into a model file.
    Train(TrainArgs),
    /// Write a run file for a dataset.
    Predict(PredictArgs),
    /// Score a run file against gold annotations.
    Evaluate(EvaluateArgs),
    /// Compare the three run modes on one dataset.
    Ablate(AblateArgs),
    /// Write a synthetic train/test corpus with known ground truth.
    Synth(SynthArgs),
}

/// Flags shared by every command that reads a dataset or tunes the pipeline.
#[derive(Debug, Args)]
pub struct Common {
    /// Column schema (TOML) for the dataset files.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Key-value configuration file (TOML); flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Flag threshold on the combined detector score.
    #[arg(long)]
    flag_threshold: Option<f64>,
    /// Paragraph similarity needed for extractive correction.
    #[arg(long)]
    min_similarity: Option<f64>,
    /// Backend corrections editing more tokens than this are rejected.
    #[arg(long)]
    max_edit_tokens: Option<usize>,
    /// Keep going when dataset rows are rejected (they are skipped).
    #[arg(long)]
    allow_rejects: bool,
}

impl Common {
    fn settings(&self, extra: Settings) -> anyhow::Result<Settings> {
        let flags = Settings {
            flag_threshold: self.flag_threshold,
            min_similarity: self.min_similarity,
            max_edit_tokens: self.max_edit_tokens,
            ..extra
        };
        Ok(Settings::load(self.config.as_deref())?.overlay(&flags))
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled training dataset.
    #[arg(long)]
    train: PathBuf,
    /// Model file to write.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the reject report (JSON lines) here instead of stderr.
    #[arg(long)]
    rejects: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by predict and ablate.
#[derive(Debug, Args)]
pub struct Serving {
    /// Base URL of the correction service.
    #[arg(long, env = "MEDIFACT_BACKEND_URL")]
    backend_url: Option<String>,
    /// Worker threads for prediction.
    #[arg(long)]
    jobs: Option<usize>,
    /// Backend request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset to predict on.
    #[arg(long)]
    input: PathBuf,
    /// Run file to write.
    #[arg(long, short)]
    out: PathBuf,
    /// extractive_only, qa or qa_with_resolver.
    #[arg(long)]
    mode: Option<RunMode>,
    #[command(flatten)]
    serving: Serving,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    /// Gold dataset.
    #[arg(long)]
    gold: PathBuf,
    /// External per-item scores as NAME=PATH (JSON lines of text_id, score).
    #[arg(long = "external", value_name = "NAME=PATH")]
    external: Vec<String>,
    /// Structured report (JSON); defaults to `<run>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    allow_rejects: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Gold dataset; defaults to the input when it carries annotations.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Directory for the per-mode run files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Structured comparison (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    serving: Serving,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving train.csv, test.csv and labels.jsonl.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_test: usize,
    #[arg(long, default_value_t = 0.4)]
    near_duplicate_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    flagged_fraction: f64,
    /// Number sentences with a random permutation instead of 0..n.
    #[arg(long)]
    shuffle_indices: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<clinfix_core::Error>() {
            return e.exit_code() as u8;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ablate(a) => commands::ablate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
