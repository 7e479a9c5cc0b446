//! Command-line driver: argument parsing, config resolution, and the five
//! subcommands.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{resolve, Preset, RunConfig};

pub const VERSION: &str = concat!("ns-pinn ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ns_pinn::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    /// 1 usage, 2 numerical failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::Core(_) => 1,
            CliError::Verification(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ns-pinn", version, about = "Navier-Stokes PINNs with Rademacher generalization bounds")]
pub struct Cli {
    /// JSON config file merged over the preset.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Dot-path override, e.g. `--set training.epochs=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network; writes checkpoint.json, history.csv, train_report.json.
    Train,
    /// Evaluate the generalization bound of a checkpoint.
    Bound {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
    },
    /// Run the inequality check suite; exits 3 if any check fails.
    Verify,
    /// Bound-versus-gap sweep over the configured N_r values.
    Sweep,
    /// Residuals of the exact solution, optionally compared with a checkpoint.
    TaylorGreenReport {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli.preset, cli.config.as_deref(), &cli.sets, cli.out.as_deref())?;
    match &cli.command {
        Command::Train => commands::cmd_train(&cfg),
        Command::Bound { checkpoint } => commands::cmd_bound(&cfg, checkpoint),
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Sweep => commands::cmd_sweep(&cfg),
        Command::TaylorGreenReport { checkpoint } => commands::cmd_taylor_green_report(&cfg, checkpoint.as_deref()),
    }
}
