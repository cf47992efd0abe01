//! `shockcast synth`: emit a synthetic dataset in the same formats real
//! ingestion uses, plus the oracle table of true conditional probabilities.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use shockcast::dataset::write_news_jsonl;
use shockcast::index::write_index_csv;
use shockcast::synth::{generate, write_oracle_csv};
use shockcast::Scalar;

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    #[arg(long)]
    entities: Option<usize>,

    #[arg(long)]
    months: Option<usize>,

    #[arg(long)]
    signal_rate: Option<Scalar>,

    #[arg(long)]
    shock_given_signal: Option<Scalar>,

    #[arg(long)]
    shock_no_signal: Option<Scalar>,
}

pub fn run(args: Args, file_config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut config = file_config.synth.clone();
    config.seed = seed;
    if let Some(n) = args.entities {
        config.n_entities = n;
    }
    if let Some(m) = args.months {
        config.n_months = m;
    }
    if let Some(rate) = args.signal_rate {
        config.signal_rate = rate;
    }
    if let Some(p) = args.shock_given_signal {
        config.shock_probability_given_signal = p;
    }
    if let Some(p) = args.shock_no_signal {
        config.shock_probability_no_signal = p;
    }

    let manifest = start_run(
        "synth",
        serde_json::to_value(&config).expect("config serializes"),
        &[],
        &args.out,
    )?;

    let output = generate(&config).map_err(|e| CliError::input(e.to_string()))?;

    let index_path = args.out.join("indexes.csv");
    write_index_csv(fs::File::create(&index_path)?, &output.indexes)
        .map_err(|e| CliError::input(e.to_string()))?;

    let news_path = args.out.join("news.jsonl");
    write_news_jsonl(fs::File::create(&news_path)?, &output.corpus)
        .map_err(|e| CliError::input(e.to_string()))?;

    let oracle_path = args.out.join("oracle.csv");
    write_oracle_csv(fs::File::create(&oracle_path)?, &output.oracle)
        .map_err(|e| CliError::input(e.to_string()))?;

    finish_run(manifest, &args.out)?;

    println!(
        "generated {} entities x {} months ({} articles, {} oracle rows)",
        config.n_entities,
        config.n_months,
        output.corpus.len(),
        output.oracle.len(),
    );
    println!(
        "question months with honest conditionals start at {}",
        output.question_start
    );
    Ok(())
}
