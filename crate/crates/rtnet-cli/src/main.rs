//! The `rtnet` binary: partial domain adaptation experiments with a
//! reinforced data selector, on synthetic Gaussian-blob tasks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rtnet_cli::config::{ExperimentConfig, Overrides};
use rtnet_cli::error::CliError;
use rtnet_cli::metrics::fmt6;
use rtnet_cli::run;
use rtnet_core::train::Variant;

#[derive(Parser)]
#[command(name = "rtnet", version, about = "Partial domain adaptation with a reinforced data selector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; each overrides the matching
/// config-file key.
#[derive(Args)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for data generation and training.
    #[arg(long)]
    seed: Option<u64>,
    /// rtnet, rtnet_noselect, coral, or source_only.
    #[arg(long)]
    variant: Option<String>,
    /// Episode budget L.
    #[arg(long)]
    episodes: Option<usize>,
    /// Reward discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Task directory with source.txt, target_train.txt, target_test.txt.
    #[arg(long)]
    task: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic task into the output directory.
    GenTask(CommonArgs),
    /// Train a model; writes metrics.csv, retention.csv, and a checkpoint.
    Train(CommonArgs),
    /// Evaluate the checkpoint in the output directory on the task's test split.
    Eval(CommonArgs),
    /// Recompute retention.csv from the checkpoint in the output directory.
    Report(CommonArgs),
    /// Train once per sweep point; writes sweep.csv.
    Sweep(CommonArgs),
}

fn build_config(args: &CommonArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let variant = match &args.variant {
        Some(name) => Some(Variant::from_name(name)?),
        None => None,
    };
    config.apply_overrides(&Overrides {
        seed: args.seed,
        variant,
        episodes: args.episodes,
        gamma: args.gamma,
        task: args.task.clone(),
        out: args.out.clone(),
    });
    Ok(config)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenTask(args) => {
            let config = build_config(&args)?;
            run::run_gen_task(&config)?;
            println!("task written to {}", config.out_dir.display());
        }
        Command::Train(args) => {
            let config = build_config(&args)?;
            let outcome = run::run_train(&config)?;
            println!(
                "final target-test accuracy: {} (artifacts in {})",
                fmt6(outcome.final_accuracy),
                config.out_dir.display()
            );
        }
        Command::Eval(args) => {
            let config = build_config(&args)?;
            let accuracy = run::run_eval(&config)?;
            println!("target-test accuracy: {}", fmt6(accuracy));
        }
        Command::Report(args) => {
            let config = build_config(&args)?;
            print!("{}", run::run_report(&config)?);
        }
        Command::Sweep(args) => {
            let config = build_config(&args)?;
            print!("{}", run::run_sweep(&config)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rtnet: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
