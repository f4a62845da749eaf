//! `beacon-rewards`: collect, aggregate, analyse and validate Beacon chain
//! validator rewards from one config file.
//!
//! Logs go to standard error; results only to files. Exit codes: 0 ok,
//! 1 data error, 2 configuration or usage error, 3 I/O error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "beacon-rewards",
    version,
    about = "Beacon chain validator reward pipeline"
)]
struct Cli {
    /// Pipeline config file (TOML). The endpoint URL and auth token can
    /// also come from BEACON_REWARDS_ENDPOINT and BEACON_REWARDS_TOKEN.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only log warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fetch raw reward streams from a node or from fixture files.
    Collect(commands::CollectArgs),
    /// Join raw streams into per-epoch, per-day and summary tables.
    Aggregate(commands::AggregateArgs),
    /// Compute daily decentralization indices and plot-ready tables.
    Metrics(commands::MetricsArgs),
    /// Generate synthetic raw streams, a ground-truth ledger and fixtures.
    Simulate(commands::SimulateArgs),
    /// Crosscheck pipeline output against reference records.
    Validate(commands::ValidateArgs),
    /// Write a table with amounts in exact Ether.
    Export(commands::ExportArgs),
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, _) => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    let result = PipelineConfig::load(cli.config.as_deref()).and_then(|config| match cli.command {
        Command::Collect(a) => commands::collect(&config, a),
        Command::Aggregate(a) => commands::aggregate(&config, a),
        Command::Metrics(a) => commands::metrics(&config, a),
        Command::Simulate(a) => commands::simulate(&config, a),
        Command::Validate(a) => commands::validate(&config, a),
        Command::Export(a) => commands::export(&config, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
