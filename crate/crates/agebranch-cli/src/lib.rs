//! Command-line frontend: one JSON config file per run, one report per command.
//!
//! Exit codes are a stable contract: 0 success, 1 configuration or runtime error,
//! 2 solver did not converge (the table is still written), 3 a comparison or
//! invariance check came out the wrong way round.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{cmd_compare, cmd_minsum, cmd_simulate, cmd_solve, cmd_survival};
pub use config::{Format, Overrides, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    ConfigError = 1,
    NotConverged = 2,
    Violation = 3,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Run(String),
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub exit: Exit,
    /// One human-readable line for stderr.
    pub summary: String,
}

#[derive(Debug, Parser)]
#[command(name = "agebranch", version, about = "Explosion analysis for age-dependent branching processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the fixed-point equation and classify the spec.
    Solve(CommonArgs),
    /// Classify a classical spec by min-summability.
    Minsum(CommonArgs),
    /// Sample proxy explosion times.
    Simulate(CommonArgs),
    /// Test the forward/backward stochastic ordering.
    Compare(CommonArgs),
    /// Survival probability.
    Survival(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides sim.master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub quiet: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Solve(a) | Command::Minsum(a) | Command::Simulate(a) | Command::Compare(a) | Command::Survival(a) => a,
        }
    }

    pub fn execute(&self, config: &RunConfig) -> Result<Outcome, CliError> {
        match self {
            Command::Solve(_) => cmd_solve(config),
            Command::Minsum(_) => cmd_minsum(config),
            Command::Simulate(_) => cmd_simulate(config),
            Command::Compare(_) => cmd_compare(config),
            Command::Survival(_) => cmd_survival(config),
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::ConfigError.code() } else { Exit::Success.code() };
        }
    };
    let a = cli.command.args();
    let result = RunConfig::load(&a.config).and_then(|mut config| {
        config.apply(&Overrides { out: a.out.clone(), format: a.format, seed: a.seed });
        cli.command.execute(&config)
    });
    match result {
        Ok(outcome) => {
            if !a.quiet {
                eprintln!("{}", outcome.summary);
            }
            outcome.exit.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            Exit::ConfigError.code()
        }
    }
}
