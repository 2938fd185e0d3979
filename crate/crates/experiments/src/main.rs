use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fastpart_experiments::commands::{cmd_certify, cmd_compare, cmd_gen_data, cmd_oracle, cmd_run, Options};
use fastpart_experiments::error::CliResult;

/// Stochastic particle gradient descent for sparse measure recovery.
#[derive(Parser)]
#[command(name = "fastpart", version)]
struct Cli {
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Trace cadence, overriding `[output] trace_every`.
    #[arg(long, global = true)]
    trace_every: Option<usize>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver described by a config file.
    Run { config: PathBuf },
    /// Run every `[variant.NAME]` section and summarize the cost to a threshold.
    Compare { config: PathBuf },
    /// Check first-order optimality of a measure on a grid.
    Certify { config: PathBuf, measure: PathBuf },
    /// Solve the problem restricted to a fixed grid.
    Oracle { config: PathBuf },
    /// Sample a benchmark dataset.
    GenData {
        problem: String,
        seed: u64,
        output: PathBuf,
        /// Number of samples, overriding the problem's default.
        #[arg(long)]
        n: Option<usize>,
        /// Use the truncated mixing law.
        #[arg(long)]
        truncate: bool,
    },
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let opts = Options {
        out_dir: cli.out_dir,
        trace_every: cli.trace_every,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Run { config } => cmd_run(&config, &opts),
        Command::Compare { config } => cmd_compare(&config, &opts),
        Command::Certify { config, measure } => cmd_certify(&config, &measure, &opts).map(drop),
        Command::Oracle { config } => cmd_oracle(&config, &opts),
        Command::GenData {
            problem,
            seed,
            n,
            truncate,
            output,
        } => cmd_gen_data(&problem, seed, n, truncate, &output, &opts),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
