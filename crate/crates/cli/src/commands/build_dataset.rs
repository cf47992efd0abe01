//! `shockcast build-dataset`: index CSV + news JSONL -> question set with
//! split report and summary, guarded against look-ahead.

use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use shockcast::dataset::{
    build_questions, chronological_split_check, corpus_horizon_check, leakage_check,
    read_news_jsonl, write_questions_jsonl, DatasetError, DatasetSummary,
};
use shockcast::index::{read_index_csv, MonthStamp};

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Index CSV (`entity_kind,entity_name,year,month,value`).
    #[arg(long)]
    indexes: PathBuf,

    /// News corpus JSONL.
    #[arg(long)]
    news: PathBuf,

    /// Chronological split boundary (YYYY-MM): train months are <= this.
    #[arg(long)]
    boundary: String,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Earliest prediction month to emit (overrides config).
    #[arg(long)]
    start: Option<String>,

    /// Maximum context articles per question (overrides config).
    #[arg(long)]
    max_articles: Option<usize>,

    /// Resolve events with strict `>` instead of `>=`.
    #[arg(long)]
    strict_threshold: bool,
}

pub fn run(args: Args, file_config: &FileConfig) -> Result<(), CliError> {
    let boundary: MonthStamp = args
        .boundary
        .parse()
        .map_err(|e| CliError::input(format!("--boundary: {e}")))?;

    let mut build_config = file_config.dataset.clone();
    if let Some(start) = &args.start {
        build_config.start = start
            .parse()
            .map_err(|e| CliError::input(format!("--start: {e}")))?;
    }
    if let Some(max_articles) = args.max_articles {
        build_config.max_articles = max_articles;
    }
    if args.strict_threshold {
        build_config.strict_threshold = true;
    }

    let manifest = start_run(
        "build-dataset",
        serde_json::json!({
            "boundary": boundary.to_string(),
            "build": build_config,
        }),
        &[args.indexes.clone(), args.news.clone()],
        &args.out,
    )?;

    let index_file = fs::File::open(&args.indexes)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", args.indexes.display())))?;
    let indexes = read_index_csv(BufReader::new(index_file))
        .map_err(|e| CliError::input(format!("{}: {e}", args.indexes.display())))?;

    let news_file = fs::File::open(&args.news)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", args.news.display())))?;
    let corpus = read_news_jsonl(BufReader::new(news_file))
        .map_err(|e| CliError::input(format!("{}: {e}", args.news.display())))?;

    let questions = build_questions(&indexes, &corpus, boundary, &build_config)
        .map_err(|e| CliError::input(e.to_string()))?;

    // integrity gates: every question's context, then the corpus horizon,
    // then the chronological ordering
    for question in &questions {
        leakage_check(question).map_err(integrity)?;
    }
    corpus_horizon_check(&questions, &corpus).map_err(integrity)?;
    let split_report = chronological_split_check(&questions).map_err(integrity)?;

    let questions_path = args.out.join("questions.jsonl");
    let mut writer = fs::File::create(&questions_path)?;
    write_questions_jsonl(&mut writer, &questions).map_err(|e| CliError::input(e.to_string()))?;

    let refs: Vec<&_> = questions.iter().collect();
    let summary = DatasetSummary::from_questions(&refs);
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    fs::write(
        args.out.join("split_report.json"),
        serde_json::to_string_pretty(&split_report).expect("report serializes"),
    )?;
    finish_run(manifest, &args.out)?;

    if split_report.vacuous {
        eprintln!("warning: test split is empty (boundary after the last resolved month)");
    }
    println!(
        "questions: {} total | train {} (event rate {:.1}%) | test {} (event rate {:.1}%) | unresolved {}",
        summary.n_questions,
        split_report.train.n_questions,
        100.0 * split_report.train.event_rate,
        split_report.test.n_questions,
        100.0 * split_report.test.event_rate,
        split_report.unresolved.n_questions,
    );
    println!("wrote {}", questions_path.display());
    Ok(())
}

fn integrity(err: DatasetError) -> CliError {
    CliError::integrity(err.to_string())
}
