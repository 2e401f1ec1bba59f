//! `mdaa` — run, sweep and verify analytic test-time adaptation at desk scale.
//!
//! Subcommands: `init` builds a model snapshot from source data, `adapt`
//! streams a corruption schedule through it and reports scores, `sweep`
//! repeats full runs over a hyperparameter axis, and `oracle` cross-checks
//! the recursive solver against a brute-force joint solve.

use clap::{Parser, Subcommand};
use mdaa_cli::commands;
use mdaa_core::error::Error;

#[derive(Parser)]
#[command(name = "mdaa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initialize classifiers from source data and write a model snapshot.
    Init(commands::InitArgs),
    /// Stream a corruption schedule through a snapshot, adapting as it goes.
    Adapt(commands::AdaptArgs),
    /// Run a full init+adapt per value along one hyperparameter axis.
    Sweep(commands::SweepArgs),
    /// Randomized equivalence suite: recursive weights vs joint solve.
    Oracle(commands::OracleArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Init(args) => commands::cmd_init(args),
        Command::Adapt(args) => commands::cmd_adapt(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Oracle(args) => commands::cmd_oracle(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

/// 2 = config/validation, 3 = IO/format, 4 = numerical failure.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidSpec(_)
        | Error::InvalidN { .. }
        | Error::InvalidSeverity { .. }
        | Error::EmptyClass { .. }
        | Error::LengthMismatch { .. }
        | Error::DimensionMismatch { .. }
        | Error::EmptyBatch
        | Error::EmptyInput
        | Error::MissingBranch(_)
        | Error::NotInitialized => 2,
        Error::Io(_) | Error::CorruptSnapshot(_) => 3,
        Error::NotPositiveDefinite { .. } | Error::NonFiniteInput { .. } => 4,
    }
}
