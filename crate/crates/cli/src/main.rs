//! Command-line pipeline for 4D radar person segmentation: synthesize or
//! compile datasets, inspect their statistics, train, evaluate, export
//! predicted masks, and render heatmaps and masks as images.
//!
//! Exit codes: 0 on success, 2 for usage or input problems (bad flags,
//! missing files, inconsistent configs), 1 for internal failures.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use radarseg4d::dataset::SplitId;

#[derive(Parser)]
#[command(name = "radarseg4d", version, about = "4D radar person segmentation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset
    Synth(SynthArgs),
    /// Compile raw captures (PCD clouds plus mask PNGs) into a dataset
    Compile(CompileArgs),
    /// Print the statistics manifest of a compiled dataset
    Stats(StatsArgs),
    /// Train a segmentation model on a compiled dataset
    Train(TrainArgs),
    /// Score a checkpoint on one dataset split
    Eval(EvalArgs),
    /// Write predicted person masks as PNG files
    Predict(PredictArgs),
    /// Render heatmaps and masks of one frame as color images
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory to write the compiled dataset into
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline config; missing sections fall back to defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Total frames to generate (overrides the config file)
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct CompileArgs {
    /// Directory of raw captures: per-sequence PCD clouds and mask PNGs
    #[arg(long)]
    raw: PathBuf,
    /// Directory to write the compiled dataset into
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline config; missing sections fall back to defaults
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// Compiled dataset directory
    #[arg(long)]
    dataset: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Compiled dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// Directory for the training log and best checkpoint
    #[arg(long)]
    out: PathBuf,
    /// JSON pipeline config; missing sections fall back to defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training seed (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Compiled dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint file to score
    #[arg(long)]
    checkpoint: PathBuf,
    /// Split to score on
    #[arg(long, value_enum, default_value_t = SplitArg::Val)]
    split: SplitArg,
    /// Also write the JSON report to this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON pipeline config (for the loss weighting in the report)
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Compiled dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// Checkpoint file to predict with
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory for the predicted mask PNGs
    #[arg(long)]
    out: PathBuf,
    /// Predict every frame of this split that has enough history
    #[arg(long, value_enum, conflicts_with = "frame")]
    split: Option<SplitArg>,
    /// Predict a single frame by id
    #[arg(long)]
    frame: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    /// Compiled dataset directory
    #[arg(long)]
    dataset: PathBuf,
    /// Frame id to render
    #[arg(long)]
    frame: String,
    /// Directory for the rendered PNGs
    #[arg(long)]
    out: PathBuf,
    /// Also render this checkpoint's predicted mask for the frame
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for SplitId {
    fn from(value: SplitArg) -> Self {
        match value {
            SplitArg::Train => SplitId::Train,
            SplitArg::Val => SplitId::Val,
            SplitArg::Test => SplitId::Test,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Compile(args) => commands::compile(args),
        Command::Stats(args) => commands::stats(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::Predict(args) => commands::predict(args),
        Command::Render(args) => commands::render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
