//! `shockcast judge`: send each forecast's reasoning trace through the
//! rubric evaluator and aggregate behavior frequencies.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::Args as ClapArgs;
use shockcast::forecast::{read_forecasts_jsonl, run_parallel, ChatClient, Forecast};
use shockcast::judge::{
    aggregate_rubric, assert_judge_config, parse_judge_json, render_judge_prompt,
    write_annotations_jsonl, AnnotationRecord,
};

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Forecasts JSONL with reasoning traces.
    #[arg(long)]
    forecasts: PathBuf,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, file_config: &FileConfig) -> Result<(), CliError> {
    let judge_config = file_config.judge_endpoint.clone();
    assert_judge_config(&judge_config).map_err(|e| CliError::input(e.to_string()))?;

    let manifest = start_run(
        "judge",
        serde_json::json!({"judge_endpoint": judge_config}),
        std::slice::from_ref(&args.forecasts),
        &args.out,
    )?;

    let forecasts_file = fs::File::open(&args.forecasts)
        .map_err(|e| CliError::input(format!("cannot open {}: {e}", args.forecasts.display())))?;
    let forecasts = read_forecasts_jsonl(BufReader::new(forecasts_file))
        .map_err(|e| CliError::input(format!("{}: {e}", args.forecasts.display())))?;

    let with_traces: Vec<&Forecast> = forecasts
        .iter()
        .filter(|f| !f.reasoning.trim().is_empty())
        .collect();
    if with_traces.is_empty() {
        return Err(CliError::input(
            "no forecasts carry reasoning traces to judge",
        ));
    }
    if with_traces.len() < forecasts.len() {
        eprintln!(
            "warning: skipping {} forecasts without reasoning traces",
            forecasts.len() - with_traces.len()
        );
    }

    let client =
        ChatClient::new(judge_config.clone()).map_err(|e| CliError::input(e.to_string()))?;
    let workers = judge_config.max_parallelism;

    // each trace judged independently, one request per trace
    let results = run_parallel(&with_traces, workers, |forecast| {
        let prompt = render_judge_prompt(&forecast.reasoning)
            .map_err(|e| JudgeOutcome::Failed(forecast.question_id.clone(), e.to_string()))?;
        let completion = client
            .complete(&prompt)
            .map_err(|e| JudgeOutcome::Endpoint(e.to_string()))?;
        match parse_judge_json(&completion.content) {
            Ok(annotation) => Ok(AnnotationRecord {
                question_id: forecast.question_id.clone(),
                backend: forecast.backend.clone(),
                annotation,
            }),
            Err(e) => Err(JudgeOutcome::Failed(
                forecast.question_id.clone(),
                format!("{e}; raw: {}", completion.content),
            )),
        }
    });

    let mut records = Vec::new();
    let mut failures: Vec<serde_json::Value> = Vec::new();
    for result in results {
        match result {
            Ok(record) => records.push(record),
            Err(JudgeOutcome::Endpoint(message)) => return Err(CliError::endpoint(message)),
            Err(JudgeOutcome::Failed(question_id, message)) => {
                failures.push(serde_json::json!({
                    "question_id": question_id,
                    "error": message,
                }));
            }
        }
    }

    if !failures.is_empty() {
        let mut file = fs::File::create(args.out.join("failures.jsonl"))?;
        for failure in &failures {
            serde_json::to_writer(&mut file, failure)
                .map_err(|e| CliError::input(format!("serialize failure: {e}")))?;
            file.write_all(b"\n")?;
        }
        eprintln!("warning: {} traces failed to judge", failures.len());
    }
    if records.is_empty() {
        return Err(CliError::input("no traces were successfully judged"));
    }

    write_annotations_jsonl(
        fs::File::create(args.out.join("annotations.jsonl"))?,
        &records,
    )
    .map_err(|e| CliError::input(e.to_string()))?;

    let annotations: Vec<_> = records.iter().map(|r| r.annotation).collect();
    let summary = aggregate_rubric(&annotations).map_err(|e| CliError::input(e.to_string()))?;
    let summary_json = serde_json::json!({
        "judge_model": judge_config.model,
        "summary": summary,
    });
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&summary_json).expect("summary serializes"),
    )?;
    finish_run(manifest, &args.out)?;

    println!(
        "judged {} traces (judge model: {})",
        summary.n_traces, judge_config.model
    );
    for (key, freq) in shockcast::judge::BEHAVIOR_KEYS
        .iter()
        .zip(summary.frequencies())
    {
        println!("  {key:28} {freq:.2}");
    }
    println!(
        "  mean total score            {:.2} / 6",
        summary.mean_total_score
    );
    Ok(())
}

enum JudgeOutcome {
    Failed(String, String),
    Endpoint(String),
}
