//! Command-line pipeline: dataset building, forecasting, evaluation, toy
//! training, reasoning judging, and synthetic generation.
//!
//! Exit codes: 0 success, 1 input error, 2 integrity violation (leakage or
//! a broken invariant), 3 endpoint exhaustion.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;

pub const EXIT_INPUT: u8 = 1;
pub const EXIT_INTEGRITY: u8 = 2;
pub const EXIT_ENDPOINT: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn integrity(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INTEGRITY,
            message: message.into(),
        }
    }

    pub fn endpoint(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_ENDPOINT,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::input(format!("io: {err}"))
    }
}

#[derive(Parser)]
#[command(
    name = "shockcast",
    version,
    about = "Supply-chain disruption forecasting pipeline"
)]
struct Cli {
    /// TOML config file; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed for all randomness; derived seeds hash this with a
    /// context label.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build forecasting questions from an index CSV and a news corpus.
    BuildDataset(commands::build_dataset::Args),
    /// Produce one forecast per question with the configured backend.
    Forecast(commands::forecast::Args),
    /// Score forecasts against resolved labels.
    Evaluate(commands::evaluate::Args),
    /// Train the toy logistic policy on labeled questions.
    TrainToy(commands::train_toy::Args),
    /// Annotate reasoning traces with the six-behavior rubric.
    Judge(commands::judge::Args),
    /// Generate a synthetic dataset with a known generating process.
    Synth(commands::synth::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let file_config = match FileConfig::load(cli.config.as_deref()) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(err.code);
        }
    };
    let seed = file_config.resolve_seed(cli.seed);

    let result = match cli.command {
        Command::BuildDataset(args) => commands::build_dataset::run(args, &file_config),
        Command::Forecast(args) => commands::forecast::run(args, &file_config),
        Command::Evaluate(args) => commands::evaluate::run(args, &file_config),
        Command::TrainToy(args) => commands::train_toy::run(args, &file_config, seed),
        Command::Judge(args) => commands::judge::run(args, &file_config),
        Command::Synth(args) => commands::synth::run(args, &file_config, seed),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.code)
        }
    }
}
