//! `jumplab` command-line surface: config loading, subcommands and manifests.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod manifest;
pub mod report;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] jumplab::Error),
    #[error("analysis refused:\n  {}", .0.join("\n  "))]
    Refused(Vec<String>),
    #[error("missing artifacts (run the producing commands first):\n  {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join("\n  "))]
    MissingArtifacts(Vec<PathBuf>),
}

impl CliError {
    /// 1 for input errors, 2 for analysis refusals.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Core(e) if e.is_refusal() => 2,
            CliError::Core(_) => 1,
            CliError::Refused(_) | CliError::MissingArtifacts(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "jumplab", version, about = "Price-jump, news, collective-jump and tail-dependence analyses on one-minute bars")]
pub struct Cli {
    /// TOML run configuration with one section per subcommand.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `out_dir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,

    /// Override a config value, e.g. `--set detect-jumps.s=8` or
    /// `--set synth.returns.tail_exponent=2.7`. Repeatable; wins over the file.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub set: Vec<String>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "JUMPLAB_THREADS", value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario (bars, news feeds, trades, aliases,
    /// blocklist, sectors, truth.json) to OUT/synth.
    Synth {
        /// Overrides synth.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides synth.n_stocks.
        #[arg(long)]
        n_stocks: Option<usize>,
        /// Overrides synth.n_days.
        #[arg(long)]
        n_days: Option<usize>,
    },
    /// Align bars onto the trading calendar; writes OUT/ingest.
    Ingest {
        /// Overrides ingest.bars.
        #[arg(long, value_name = "FILE")]
        bars: Option<PathBuf>,
    },
    /// Detect s-jumps and fit the score tail; writes OUT/detect-jumps.
    DetectJumps {
        /// Overrides detect-jumps.s.
        #[arg(long)]
        s: Option<f64>,
    },
    /// Filter and merge news, classify jumps, conditional rates, volatility
    /// profiles and relaxation fits; writes OUT/event-study.
    EventStudy,
    /// Co-jump spectrum, market and sector jumps, explained fractions;
    /// writes OUT/collective.
    Collective {
        /// Overrides collective.s_prime.
        #[arg(long)]
        s_prime: Option<f64>,
    },
    /// Volume/return tail dependence for trades and bars; writes OUT/taildep.
    Taildep,
    /// Plot-data CSVs for every figure from prior artifacts; writes OUT/report.
    Report,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::DetectJumps { .. } => "detect-jumps",
            Command::EventStudy => "event-study",
            Command::Collective { .. } => "collective",
            Command::Taildep => "taildep",
            Command::Report => "report",
        }
    }

    fn overrides(&self) -> Vec<String> {
        let quoted = |p: &PathBuf| toml::Value::String(p.display().to_string()).to_string();
        let mut out = Vec::new();
        match self {
            Command::Synth { seed, n_stocks, n_days } => {
                out.extend(seed.map(|v| format!("synth.seed={v}")));
                out.extend(n_stocks.map(|v| format!("synth.n_stocks={v}")));
                out.extend(n_days.map(|v| format!("synth.n_days={v}")));
            }
            Command::Ingest { bars } => out.extend(bars.as_ref().map(|p| format!("ingest.bars={}", quoted(p)))),
            Command::DetectJumps { s } => out.extend(s.map(|v| format!("detect-jumps.s={v:?}"))),
            Command::Collective { s_prime } => out.extend(s_prime.map(|v| format!("collective.s_prime={v:?}"))),
            Command::EventStudy | Command::Taildep | Command::Report => {}
        }
        out
    }
}

impl Cli {
    /// Config file, then `--set`, then dedicated flags.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(dir) = &self.out_dir {
            overrides.push(format!("out_dir={}", toml::Value::String(dir.display().to_string())));
        }
        overrides.extend(self.command.overrides());
        RunConfig::load(self.config.as_deref(), &overrides)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.run_config()?;
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Ingest { .. } => commands::ingest(&cfg),
        Command::DetectJumps { .. } => commands::detect_jumps(&cfg),
        Command::EventStudy => commands::event_study(&cfg),
        Command::Collective { .. } => commands::collective(&cfg),
        Command::Taildep => commands::taildep(&cfg),
        Command::Report => report::report(&cfg),
    }
}
