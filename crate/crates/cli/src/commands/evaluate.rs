//! `shockcast evaluate`: join forecasts with resolved questions and emit
//! the metric report, reliability bins, and plot-data series.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use shockcast::dataset::Split;
use shockcast::forecast::read_forecasts_jsonl;
use shockcast::metrics::{eval_report, write_plot_metrics_csv, write_reliability_csv, ScoredPair};
use shockcast::Prob;

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, load_questions, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Forecasts JSONL.
    #[arg(long)]
    forecasts: PathBuf,

    /// Question set the forecasts answer.
    #[arg(long)]
    questions: PathBuf,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Baseline rate for the skill score; defaults to the train-split
    /// event rate of the question set.
    #[arg(long)]
    baseline_rate: Option<Prob>,

    /// Split to evaluate (default: test).
    #[arg(long, default_value = "test")]
    split: String,

    /// Column-mapping TOML for externally formatted question files.
    #[arg(long)]
    adapter: Option<PathBuf>,
}

pub fn run(args: Args, file_config: &FileConfig) -> Result<(), CliError> {
    let manifest = start_run(
        "evaluate",
        serde_json::json!({
            "evaluate": file_config.evaluate,
            "split": args.split,
            "baseline_rate": args.baseline_rate,
        }),
        &[args.forecasts.clone(), args.questions.clone()],
        &args.out,
    )?;

    let questions = load_questions(&args.questions, args.adapter.as_deref())?;
    let forecasts_file = fs::File::open(&args.forecasts)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", args.forecasts.display())))?;
    let forecasts = read_forecasts_jsonl(BufReader::new(forecasts_file))
        .map_err(|e| CliError::input(format!("{}: {e}", args.forecasts.display())))?;
    if forecasts.is_empty() {
        return Err(CliError::input("no forecasts to evaluate"));
    }

    let wanted = match args.split.as_str() {
        "train" => Split::Train,
        "test" => Split::Test,
        other => {
            return Err(CliError::input(format!(
                "cannot evaluate split {other:?} (labels required)"
            )))
        }
    };

    let baseline_rate = match args.baseline_rate {
        Some(rate) => rate,
        None => {
            let train_labels: Vec<bool> = questions
                .iter()
                .filter(|q| q.split == Split::Train)
                .filter_map(|q| q.label)
                .collect();
            if train_labels.is_empty() {
                return Err(CliError::input(
                    "no train labels to derive a baseline rate; pass --baseline-rate",
                ));
            }
            train_labels.iter().filter(|&&y| y).count() as Prob / train_labels.len() as Prob
        }
    };

    let labels: BTreeMap<&str, bool> = questions
        .iter()
        .filter(|q| q.split == wanted)
        .filter_map(|q| q.label.map(|y| (q.id.as_str(), y)))
        .collect();

    let mut backend = String::new();
    let mut pairs: Vec<ScoredPair<Prob>> = Vec::new();
    for forecast in &forecasts {
        let Some(&outcome) = labels.get(forecast.question_id.as_str()) else {
            continue; // different split or unresolved
        };
        backend = forecast.backend.clone();
        pairs.push(ScoredPair {
            question_id: forecast.question_id.clone(),
            predicted: forecast.probability,
            outcome,
        });
    }
    if pairs.is_empty() {
        return Err(CliError::input(format!(
            "no forecasts matched resolved {} questions",
            args.split
        )));
    }
    if pairs.len() < forecasts.len() {
        eprintln!(
            "note: {} of {} forecasts skipped (different split or unresolved)",
            forecasts.len() - pairs.len(),
            forecasts.len()
        );
    }

    let report = eval_report(&backend, &pairs, baseline_rate, &file_config.evaluate)
        .map_err(|e| CliError::input(e.to_string()))?;

    fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    write_reliability_csv(
        fs::File::create(args.out.join("reliability.csv"))?,
        &report.reliability,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    write_plot_metrics_csv(
        fs::File::create(args.out.join("plot_metrics.csv"))?,
        &report,
    )
    .map_err(|e| CliError::input(e.to_string()))?;
    finish_run(manifest, &args.out)?;

    println!(
        "{}: n={} brier={:.4} bss={:+.1}% ece={:.4} precision@{:.0}%={:.4} (k={})",
        report.backend,
        report.n,
        report.brier,
        100.0 * report.bss_vs_baseline,
        report.ece,
        100.0 * report.precision_frac,
        report.precision_at_frac,
        report.k_used,
    );
    Ok(())
}
