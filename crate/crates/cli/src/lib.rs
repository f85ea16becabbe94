//! Command-line harness: reads a TOML run configuration, runs one of the
//! experiments and writes CSV artifacts plus a JSON report.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{run, RunReport};
pub use config::{Experiment, ResolvedConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "enn", version, about = "Ensemble neural networks trained by EnRML")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cubic toy regression with prediction bands.
    Toy(RunArgs),
    /// Ideal dataset generated by a known network.
    Sanity(RunArgs),
    /// Train on a delimited text table.
    Train(RunArgs),
    /// Replay the hand-worked three-step example.
    FixtureCheck(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for dataset generation and shuffling.
    #[arg(long)]
    pub seed_data: Option<u64>,
    /// Seed for the prior ensemble draw.
    #[arg(long)]
    pub seed_ensemble: Option<u64>,
    /// Seed for observation perturbations.
    #[arg(long)]
    pub seed_perturb: Option<u64>,
    /// Worker threads for ensemble evaluation.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    pub fn parts(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::Toy(a) => (Experiment::Toy, a),
            Command::Sanity(a) => (Experiment::Sanity, a),
            Command::Train(a) => (Experiment::TrainCsv, a),
            Command::FixtureCheck(a) => (Experiment::FixtureCheck, a),
        }
    }
}

/// Loads and resolves the configuration named by `args`.
pub fn resolve_args(experiment: Experiment, args: &RunArgs) -> Result<ResolvedConfig> {
    let (cfg, base) = match &args.config {
        Some(path) => (
            config::load(path)?,
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (config::RunConfig::default(), PathBuf::from(".")),
    };
    let overrides = config::Overrides {
        output_dir: args.out.clone(),
        seed_data: args.seed_data,
        seed_ensemble: args.seed_ensemble,
        seed_perturb: args.seed_perturb,
    };
    config::resolve(&cfg, experiment, &overrides, &base)
}

pub fn execute(cli: &Cli) -> Result<RunReport> {
    let (experiment, args) = cli.command.parts();
    let cfg = resolve_args(experiment, args)?;
    match args.threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?
            .install(|| run(&cfg)),
        None => run(&cfg),
    }
}
