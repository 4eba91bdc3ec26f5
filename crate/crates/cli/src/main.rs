//! `latentmv`: generate synthetic panels, run rolling-window backtests and
//! build report tables from their results.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latentmv_core::Month;

mod attribution;
mod backtest;
mod config;
mod output;
mod report;
mod synth;

/// How a command failed. Usage and configuration problems exit with 2,
/// failures while running exit with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(Vec<String>),
    Runtime(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn report(&self) {
        match self {
            Failure::Usage(m) => eprintln!("error: {m}"),
            Failure::Config(problems) => {
                eprintln!("error: invalid configuration ({} problems)", problems.len());
                for p in problems {
                    eprintln!("  - {p}");
                }
            }
            Failure::Runtime(m) => eprintln!("error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "latentmv", version, about = "Latent-factor minimum-variance backtests")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs windows sequentially. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides the configuration).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic factor-model return panel.
    Synth {
        #[arg(long, default_value_t = 100)]
        assets: usize,
        #[arg(long, default_value_t = 480)]
        dates: usize,
        /// Number of planted factors.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Idiosyncratic return volatility.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// First month, YYYY-MM.
        #[arg(long, default_value = "1960-01")]
        start: Month,
        /// Panel CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the factor series (mkt, f1.., rf) here.
        #[arg(long)]
        factors_out: Option<PathBuf>,
    },
    /// Run every configured strategy over the rolling windows.
    Backtest,
    /// Build performance, weight, structure and optional subperiod and
    /// attribution tables from a results directory.
    Report {
        /// Directory written by `backtest`.
        results: PathBuf,
        /// Subperiod split of the out-of-sample returns.
        #[arg(long, value_enum)]
        subperiods: Option<report::Subperiods>,
        /// CSV (date,<columns>) holding the state variable.
        #[arg(long)]
        state_series: Option<PathBuf>,
        /// Column of the state series (default mkt for volatility regimes).
        #[arg(long)]
        state_column: Option<String>,
        /// Comma-separated proportional costs in basis points.
        #[arg(long, value_delimiter = ',')]
        costs: Option<Vec<f64>>,
        /// Explain the latent factors with the configured proxies.
        #[arg(long)]
        attribution: bool,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = cli.jobs.unwrap_or(0);
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match cli.command {
        Command::Synth {
            assets,
            dates,
            k,
            noise,
            start,
            out,
            factors_out,
        } => synth::run(&synth::SynthArgs {
            assets,
            dates,
            k,
            noise,
            start,
            seed: cli.seed.unwrap_or(0),
            out: &out,
            factors_out: factors_out.as_deref(),
        }),
        Command::Backtest => {
            let path = cli
                .config
                .ok_or_else(|| Failure::Usage("backtest needs --config".into()))?;
            let overrides = config::Overrides {
                seed: cli.seed,
                out_dir: cli.out_dir,
            };
            let (cfg, bytes) = config::RunConfig::load(&path, &overrides)?;
            backtest::run(&cfg, &bytes, jobs != 1)
        }
        Command::Report {
            results,
            subperiods,
            state_series,
            state_column,
            costs,
            attribution,
        } => report::run(&report::ReportArgs {
            results,
            out: cli.out_dir,
            subperiods,
            state_series,
            state_column,
            costs,
            attribution,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.exit_code())
        }
    }
}
