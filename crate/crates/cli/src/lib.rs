//! Command-line pipeline: ingest, form pairs, tune, trade, train, evaluate
//! and report, all driven by one TOML config.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pairlab::env::{EnvMode, RewardVariant};
use pairlab::market_data::Interval;

use crate::config::{Overrides, RunConfig};
use crate::error::Result;
use crate::pipeline::{AgentKind, Pipeline, PolicyKind, Split};

#[derive(Debug, Parser)]
#[command(name = "pairlab", version, about = "Pairs-trading research pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fee rate per leg per trade, e.g. 0.0002.
    #[arg(long)]
    pub fee: Option<f64>,
    /// Artifact root directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// 1m, 3m or 5m.
    #[arg(long)]
    pub interval: Option<Interval>,
    /// rl1 or rl2.
    #[arg(long)]
    pub mode: Option<EnvMode>,
    /// shaped or plain.
    #[arg(long)]
    pub reward: Option<RewardVariant>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            fee: self.fee,
            out: self.out.clone(),
            interval: self.interval,
            mode: self.mode,
            reward: self.reward,
        }
    }

    pub fn load(&self) -> Result<RunConfig> {
        RunConfig::load(&self.config, &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate 1m klines and store 1m/3m/5m series.
    Ingest(Common),
    /// Score every symbol pair over the formation span and pick the best.
    Pairs(Common),
    /// Tune open/close thresholds and window on the formation span.
    Gridsearch(Common),
    /// Trade a rule policy over the test span.
    Backtest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "gatev")]
        policy: PolicyKind,
    },
    /// Train the actor-critic agent on the formation span.
    Train(Common),
    /// Run an agent through the environment over the test span.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "a2c")]
        agent: AgentKind,
    },
    /// Fee-tier comparison table, optionally merging extra run directories.
    Report {
        #[command(flatten)]
        common: Common,
        artifacts: Vec<PathBuf>,
    },
    /// Serve the environment as line-delimited JSON on stdin/stdout.
    ServeEnv {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
}

/// Runs one subcommand, returning the artifact directory it wrote (if any).
pub fn run(cli: Cli) -> Result<Option<PathBuf>> {
    let common = match &cli.command {
        Command::Ingest(c) | Command::Pairs(c) | Command::Gridsearch(c) | Command::Train(c) => c,
        Command::Backtest { common, .. } | Command::Eval { common, .. } | Command::Report { common, .. } | Command::ServeEnv { common, .. } => common,
    };
    let p = Pipeline::new(common.load()?);
    let art = match &cli.command {
        Command::Ingest(_) => p.ingest()?,
        Command::Pairs(_) => p.pairs()?,
        Command::Gridsearch(_) => p.gridsearch()?,
        Command::Backtest { policy, .. } => p.backtest(*policy)?,
        Command::Train(_) => p.train()?,
        Command::Eval { agent, .. } => p.eval(*agent)?,
        Command::Report { artifacts, .. } => p.report(artifacts)?,
        Command::ServeEnv { split, .. } => {
            pipeline::serve_stdio(&p, *split)?;
            return Ok(None);
        }
    };
    Ok(Some(art.dir))
}
