use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use smi_cli::commands;
use smi_cli::config::RunConfig;
use smi_cli::CliError;

/// Semi-modular inference runner: cut-to-Bayes candidate posteriors with
/// elpd-based selection of the influence parameter.
#[derive(Parser)]
#[command(name = "smi", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the worker thread count (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset and write it with its manifest.
    Simulate(CommonArgs),
    /// Run an eta sweep and write the table and plot.
    Sweep(CommonArgs),
    /// Replicate the synthetic biased-data study.
    ReplicateStudy(CommonArgs),
    /// Rebuild the study report from emitted per-replicate CSVs.
    Report(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_path(&args.config)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(out) = &args.out {
        cfg.run.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.run.master_seed = seed;
    }
    if let Some(threads) = args.threads {
        cfg.run.threads = threads;
    }
    cfg.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(cfg)
}

fn run() -> Result<u8, CliError> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(args) => {
            commands::cmd_simulate(&load_config(args)?)?;
            Ok(0)
        }
        Command::Sweep(args) => {
            let all_failed = commands::cmd_sweep(&load_config(args)?)?;
            Ok(if all_failed { 3 } else { 0 })
        }
        Command::ReplicateStudy(args) => {
            commands::cmd_replicate_study(&load_config(args)?)?;
            Ok(0)
        }
        Command::Report(args) => {
            commands::cmd_report(&load_config(args)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("smi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
