//! Command-line front end: JSON run configs in, files under one output
//! directory out.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_analytics, cmd_ensemble, cmd_evaluate, cmd_report, cmd_synth, cmd_train};
pub use config::{AnalyticsConfig, DataSource, RunConfig, SEED_ENV};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "fairprice", version, about = "Fairness-aware insurance pricing runs")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic table (data.csv + data.json).
    Synth(RunArgs),
    /// Fit the configured fair models.
    Train(RunArgs),
    /// Score trained models on the train and test splits.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        svg: bool,
    },
    /// Solidarity tables and double-lift charts.
    Analytics(RunArgs),
    /// Evolve and select the gated MO/MSCM ensemble.
    Ensemble(RunArgs),
    /// Summarize a run directory.
    Report {
        /// Run directory to summarize.
        #[arg(long)]
        out: PathBuf,
    },
}

fn prepare(args: &RunArgs) -> CliResult<(RunConfig, PathBuf)> {
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut cfg = RunConfig::load(&args.config)?.resolve(env_seed.as_deref())?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output_dir`".into()))?;
    cfg.output_dir = Some(out.clone());
    Ok((cfg, out))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => {
            let (cfg, out) = prepare(a)?;
            cmd_synth(&cfg, &out)?;
        }
        Command::Train(a) => {
            let (cfg, out) = prepare(a)?;
            cmd_train(&cfg, &out)?;
        }
        Command::Evaluate { run, svg } => {
            let (cfg, out) = prepare(run)?;
            cmd_evaluate(&cfg, &out, *svg)?;
        }
        Command::Analytics(a) => {
            let (cfg, out) = prepare(a)?;
            cmd_analytics(&cfg, &out)?;
        }
        Command::Ensemble(a) => {
            let (cfg, out) = prepare(a)?;
            cmd_ensemble(&cfg, &out)?;
        }
        Command::Report { out } => {
            cmd_report(out)?;
        }
    }
    Ok(())
}
