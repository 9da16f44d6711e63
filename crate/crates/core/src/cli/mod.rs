//! Command-line front end. [`dispatch`] parses arguments, runs one
//! subcommand and maps the outcome to an exit code: 0 on success, 1 on a
//! domain error (its name goes to stderr), 2 on a usage error.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::TaskId;
use crate::error::Error;

pub use config::{resolve_train_config, Preset};
pub use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(name = "poembert", version, about = "Arabic poetry BERT pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_task(s: &str) -> Result<TaskId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with one planted, recoverable label.
    Synth(SynthArgs),
    /// Normalize verses into `verse_id<TAB>line` records.
    Preprocess(PreprocessArgs),
    /// Learn a WordPiece vocabulary from preprocessed lines.
    TrainTokenizer(TrainTokenizerArgs),
    /// Encode preprocessed lines as JSON token sequences.
    Encode(EncodeArgs),
    /// Masked-language-model pretraining.
    Pretrain(PretrainArgs),
    /// Train a classification head on a labeled corpus.
    Finetune(FinetuneArgs),
    /// Score a fine-tuned checkpoint on its validation split.
    Evaluate(EvaluateArgs),
    /// Classify verses read from stdin (hemistichs separated by a tab).
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_parser = parse_task)]
    signal: TaskId,
    #[arg(long)]
    out: PathBuf,
    /// Also write every task's label list as JSON.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    keep_duplicates: bool,
}

#[derive(Debug, Args)]
struct TrainTokenizerArgs {
    #[arg(long)]
    lines: PathBuf,
    #[arg(long, default_value_t = 50_000)]
    vocab_size: usize,
    #[arg(long, default_value_t = crate::tokenizer::DEFAULT_MIN_FREQUENCY)]
    min_frequency: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    #[arg(long)]
    lines: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = 32)]
    max_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Args)]
struct TrainFlags {
    #[arg(long, value_enum, default_value_t = Preset::Paper)]
    preset: Preset,
    /// JSON overlay of training fields, plus an optional "model" object.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    #[arg(long)]
    lines: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: TaskId,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fraction of each stratum used for training.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    #[arg(long)]
    stratify: bool,
    #[arg(long)]
    head_only: bool,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitPart {
    Val,
    Train,
    All,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: TaskId,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Which part of the checkpoint's recorded split to score.
    #[arg(long, value_enum, default_value_t = SplitPart::Val)]
    split: SplitPart,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: TaskId,
}

/// Runs one invocation and returns its exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::run(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(dispatch(["poembert", "frobnicate"]), 2);
        assert_eq!(dispatch(["poembert"]), 2);
        assert_eq!(dispatch(["poembert", "synth", "--n", "3"]), 2);
        assert_eq!(dispatch(["poembert", "synth", "--n", "3", "--signal", "colour", "--out", "x"]), 2);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(dispatch(["poembert", "--help"]), 0);
    }

    #[test]
    fn domain_errors_exit_1() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.tsv");
        let out = dir.path().join("out.tsv");
        let code = dispatch([
            "poembert".as_ref(),
            "preprocess".as_ref(),
            "--corpus".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 1);
    }
}
