//! `netload` command-line tool.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use netload::forecast::Approach;

#[derive(Debug, Parser)]
#[command(name = "netload", version, about = "Microgrid net-load derivation and LSTM forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for synthesis, initialization, shuffling and dropout.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory (default: the config's `output_dir`, else `netload-out`).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic weather and demand year.
    Synth,
    /// Derive wind, solar and net-load series from a weather year.
    Derive(InputArgs),
    /// Train one pipeline and evaluate it on the test partition.
    Train(TrainArgs),
    /// Forecast with a saved model snapshot.
    Predict(PredictArgs),
    /// Train both pipelines and compare their test metrics.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Weather CSV (default: the config's `input`, else the synthetic year of the seed).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub approach: Option<Approach>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Snapshot written by `train`.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NETLOAD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("NETLOAD_THREADS={raw:?} is not a thread count"))?;
    if n == 0 {
        bail!("NETLOAD_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure the thread pool")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| commands::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
