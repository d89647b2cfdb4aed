use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Attention-weighted spike detection for multichannel recordings.
#[derive(Parser)]
#[command(name = "ndl", version, about)]
struct Cli {
    /// TOML run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and its ground-truth sidecar.
    Simulate(commands::simulate::Args),
    /// Fit a model to a dataset.
    Train(commands::train::Args),
    /// Score a dataset and report classification and recovery metrics.
    Eval(commands::eval::Args),
    /// Annotate spikes in a continuous recording.
    Detect(commands::detect::Args),
    /// Rank channels by learned importance.
    Rank(commands::rank::Args),
    /// Turn histories, metrics and scores into plot-ready tables.
    Report(commands::report::Args),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(a) => commands::simulate::run(a, &cfg),
        Command::Train(a) => commands::train::run(a, &cfg),
        Command::Eval(a) => commands::eval::run(a, &cfg),
        Command::Detect(a) => commands::detect::run(a, &cfg),
        Command::Rank(a) => commands::rank::run(a, &cfg),
        Command::Report(a) => commands::report::run(a, &cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("ndl: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
