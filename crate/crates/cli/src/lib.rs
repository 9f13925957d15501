//! Command-line front end: reads an experiment config, runs the analysis,
//! simulation or figure computation and writes CSV files.
//!
//! Exit codes: 0 on success, 2 for config errors, 3 for numerical or
//! statistical failures, 1 for I/O errors.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::FigureName;
pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mmiq",
    version,
    about = "Markov-modulated infinite-server queues"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact means, covariances and limit covariances.
    Analyze(Common),
    /// Monte Carlo moments and limit diagnostics.
    Simulate(Common),
    /// Data and gnuplot script for a figure.
    Figure {
        name: FigureName,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for simulation.
    #[arg(long, env = "MMIQ_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    pub threads: Option<u16>,
    /// Cap every scale N at 1e4.
    #[arg(long)]
    pub downscale: bool,
}

/// Runs a parsed command and returns the files it wrote.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let common = match &cli.command {
        Command::Analyze(c) | Command::Simulate(c) => c,
        Command::Figure { common, .. } => common,
    };
    let cfg = ExperimentConfig::load(&common.config)?;
    let out = common.out.as_deref();
    let work = || dispatch(&cli.command, &cfg, out, common.downscale);
    match common.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.into())
            .build()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?
            .install(work),
        None => work(),
    }
}

fn dispatch(
    command: &Command,
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    downscale: bool,
) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Analyze(_) => commands::analyze(cfg, out, downscale),
        Command::Simulate(_) => commands::simulate(cfg, out, downscale),
        Command::Figure { name, .. } => commands::figure(*name, cfg, out, downscale),
    }
}
