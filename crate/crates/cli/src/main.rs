//! `driftlab` command-line runner.
//!
//! Exit codes: 0 success (warnings go to stderr), 1 usage or configuration
//! error, 2 data or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::Format;

#[derive(Debug, Parser)]
#[command(name = "driftlab", version, about = "Separate environmental variation from instrumental drift in gas-sensor fleets")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "DRIFTLAB_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true, env = "DRIFTLAB_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "DRIFTLAB_OUT")]
    pub out: Option<PathBuf>,
    /// Report formats; repeat or separate with commas.
    #[arg(long = "format", global = true, env = "DRIFTLAB_FORMAT", value_enum, value_delimiter = ',')]
    pub formats: Vec<Format>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, env = "DRIFTLAB_JOBS", value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic fleet, its ground-truth oracle and an evaluate config.
    Simulate,
    /// Parse and preprocess the configured inputs and print what was kept.
    IngestCheck,
    /// Run the monthly drift evaluation and write the report.
    Evaluate,
    /// Re-emit an existing report.json in the requested formats and print a summary.
    Report {
        /// Report to read (default: <out>/report.json).
        #[arg(long, env = "DRIFTLAB_INPUT")]
        input: Option<PathBuf>,
    },
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Data(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
