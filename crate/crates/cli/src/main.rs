//! `vwskill`: score binary forecasts, search thresholds, build epoch-selection
//! ensembles and backtest down-movement predictions.

mod commands;
mod ensemble;
mod io;
mod manifest;
mod prepare;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use vwskill_core::Error as CoreError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_EMPTY_ENSEMBLE: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_REPLAY_MISMATCH: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "vwskill", version, about = "Value-weighted skill scores and epoch-selection ensembles")]
pub struct Cli {
    /// JSON file with flag defaults (keys are flag names with underscores)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log output; repeat for more
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Both confusion matrices, all eight scores and per-error weights
    Score(commands::ScoreCmd),
    /// Score several prediction files against the same labels
    Compare(commands::CompareCmd),
    /// Score of every candidate threshold
    Curve(commands::CurveCmd),
    /// Train (or load) epoch snapshots, calibrate, select and predict
    Ensemble(ensemble::EnsembleCmd),
    /// Simulate the down-movement trading strategy
    Backtest(commands::BacktestCmd),
    /// Turn a raw CSV time series into labeled train/valid/test files
    Prepare(prepare::PrepareCmd),
    /// Seeded synthetic comparison of TSS- and wTSS-optimized ensembles
    Demo(commands::DemoCmd),
    /// Re-run a recorded manifest and check that outputs match
    Replay(commands::ReplayCmd),
}

/// Marks a replay whose outputs differ from the recorded ones.
#[derive(Debug)]
pub struct ReplayMismatch(pub Vec<String>);

impl std::fmt::Display for ReplayMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "replay outputs differ: {}", self.0.join(", "))
    }
}

impl std::error::Error for ReplayMismatch {}

pub fn run(cli: Cli, argv: Vec<String>) -> anyhow::Result<()> {
    let config = settings::ConfigFile::load(cli.config.as_deref())?;
    let run = manifest::Run::new(argv, config);
    match cli.command {
        Command::Score(c) => commands::score(c, run),
        Command::Compare(c) => commands::compare(c, run),
        Command::Curve(c) => commands::curve(c, run),
        Command::Ensemble(c) => ensemble::run(c, run),
        Command::Backtest(c) => commands::backtest(c, run),
        Command::Prepare(c) => prepare::run(c, run),
        Command::Demo(c) => commands::demo(c, run),
        Command::Replay(c) => commands::replay(c),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::EmptyEnsemble { .. } => EXIT_EMPTY_ENSEMBLE,
                CoreError::Divergence { .. } => EXIT_DIVERGENCE,
                _ => EXIT_INPUT,
            };
        }
        if cause.downcast_ref::<ReplayMismatch>().is_some() {
            return EXIT_REPLAY_MISMATCH;
        }
    }
    EXIT_INPUT
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse_from(&argv);
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
