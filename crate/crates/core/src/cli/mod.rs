//! Command-line front end.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::RunConfig;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SPTLAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sptlab", version, about = "Rank-based market simulation, estimation, and futures backtests")]
pub struct Cli {
    /// TOML file of settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a first-order model and write the price panel.
    Simulate(SimulateArgs),
    /// Estimate the first-order approximation of a panel.
    Estimate(EstimateArgs),
    /// Build the normalized implied-price panel and carry table from quotes.
    Ingest(IngestArgs),
    /// Backtest weight policies on the implied-price panel.
    Backtest(BacktestArgs),
    /// Write the data behind every figure and table for a quotes file.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Growth rates by rank, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub g: Option<Vec<f64>>,
    /// Volatilities by rank; a single value applies to every rank.
    #[arg(long, value_delimiter = ',')]
    pub sigma: Option<Vec<f64>>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Step length in years.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub initial_log_prices: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Period length in years of the panel.
    #[arg(long)]
    pub dt: Option<f64>,
    /// First date of the estimation window.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// Last date of the estimation window.
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<String>,
    /// Gaussian smoothing std dev in ranks.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Simulated paths for the rank-size comparison; 0 skips it.
    #[arg(long)]
    pub sims: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Implied-price panel; built from the quotes when omitted.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    /// Policies separated by ';', e.g. "market;equal;diversity:-0.5;reverse".
    #[arg(long, allow_hyphen_values = true)]
    pub policies: Option<String>,
    /// First rebalance month (YYYY-MM); moved forward to eligibility if earlier.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub quotes: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub policies: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub sims: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn flags(&self) -> RunConfig {
        match self {
            Command::Simulate(a) => RunConfig {
                g: a.g.clone(),
                sigma: a.sigma.clone(),
                steps: a.steps,
                dt: a.dt,
                seed: a.seed,
                paths: a.paths,
                initial_log_prices: a.initial_log_prices.clone(),
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Estimate(a) => RunConfig {
                panel: a.panel.clone(),
                dt: a.dt,
                from: a.from.clone(),
                to: a.to.clone(),
                bandwidth: a.bandwidth,
                sims: a.sims,
                seed: a.seed,
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Ingest(a) => RunConfig {
                quotes: a.quotes.clone(),
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Backtest(a) => RunConfig {
                panel: a.panel.clone(),
                quotes: a.quotes.clone(),
                policies: a.policies.clone(),
                start: a.start.clone(),
                out: a.out.clone(),
                ..Default::default()
            },
            Command::Reproduce(a) => RunConfig {
                quotes: a.quotes.clone(),
                policies: a.policies.clone(),
                bandwidth: a.bandwidth,
                sims: a.sims,
                seed: a.seed,
                out: a.out.clone(),
                ..Default::default()
            },
        }
    }
}

fn apply_thread_cap() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        crate::exec::set_worker_threads(n);
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    apply_thread_cap()?;
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = file.overlay(cli.command.flags());
    match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Estimate(_) => commands::estimate(&cfg),
        Command::Ingest(_) => commands::ingest(&cfg),
        Command::Backtest(_) => commands::backtest(&cfg),
        Command::Reproduce(_) => commands::reproduce(&cfg),
    }
}

/// Process entry point; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
