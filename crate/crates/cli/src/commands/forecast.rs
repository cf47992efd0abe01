//! `shockcast forecast`: one forecast per question through the configured
//! backend. Reruns resume: question ids already present in the output are
//! skipped. With `n_samples >= 2` on the remote endpoint, rollouts and a
//! GRPO-style advantage batch are exported alongside the forecasts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::Args as ClapArgs;
use shockcast::dataset::{ForecastingQuestion, Split};
use shockcast::forecast::{
    read_forecasts_jsonl, run_parallel, ChatClient, ConstantForecaster, Featurizer, Forecast,
    ForecastError, Forecaster, RemoteForecaster, SavedPolicy, ToyForecaster, ToyPolicy,
};
use shockcast::training::{advantage_batch, write_advantage_jsonl, Rollout};
use shockcast::{Prob, Scalar};

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, load_questions, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Question set (JSONL, or external format with --adapter).
    #[arg(long)]
    questions: PathBuf,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Backend: constant, remote, or toy (overrides config).
    #[arg(long)]
    backend: Option<String>,

    /// Rate for the constant backend (overrides config).
    #[arg(long)]
    rate: Option<Prob>,

    /// Saved policy for the toy backend (overrides config).
    #[arg(long)]
    policy: Option<PathBuf>,

    /// Restrict to one split: train, test, or unresolved.
    #[arg(long)]
    split: Option<String>,

    /// Column-mapping TOML for externally formatted question files.
    #[arg(long)]
    adapter: Option<PathBuf>,

    /// Rollouts per question (overrides the endpoint config).
    #[arg(long)]
    n_samples: Option<usize>,
}

pub fn run(args: Args, file_config: &FileConfig) -> Result<(), CliError> {
    let backend_kind = args
        .backend
        .clone()
        .unwrap_or_else(|| file_config.forecast.backend.clone());

    let manifest = start_run(
        "forecast",
        serde_json::json!({
            "backend": backend_kind,
            "forecast": file_config.forecast,
            "endpoint": file_config.endpoint,
            "split": args.split,
        }),
        std::slice::from_ref(&args.questions),
        &args.out,
    )?;

    let mut questions = load_questions(&args.questions, args.adapter.as_deref())?;
    // the guard also runs here: a hand-edited question file must not leak
    for question in &questions {
        shockcast::dataset::leakage_check(question)
            .map_err(|e| CliError::integrity(e.to_string()))?;
    }
    if let Some(split) = &args.split {
        let wanted = parse_split(split)?;
        questions.retain(|q| q.split == wanted);
    }
    if questions.is_empty() {
        return Err(CliError::input("no questions to forecast"));
    }

    // resume: skip ids already forecast into this output
    let forecasts_path = args.out.join("forecasts.jsonl");
    let done: BTreeSet<String> = if forecasts_path.exists() {
        let file = fs::File::open(&forecasts_path)?;
        read_forecasts_jsonl(BufReader::new(file))
            .map_err(|e| CliError::input(format!("existing forecasts: {e}")))?
            .into_iter()
            .map(|f| f.question_id)
            .collect()
    } else {
        BTreeSet::new()
    };
    let pending: Vec<&ForecastingQuestion> =
        questions.iter().filter(|q| !done.contains(&q.id)).collect();
    if pending.is_empty() {
        println!(
            "nothing to do: all {} questions already forecast",
            questions.len()
        );
        finish_run(manifest, &args.out)?;
        return Ok(());
    }

    let n_samples = args.n_samples.unwrap_or(file_config.endpoint.n_samples);
    match backend_kind.as_str() {
        "constant" => {
            let rate = args.rate.unwrap_or(file_config.forecast.constant_rate);
            let backend =
                ConstantForecaster::new(rate).map_err(|e| CliError::input(e.to_string()))?;
            run_pure_backend(&backend, &pending, &forecasts_path)?;
        }
        "toy" => {
            let policy_path = args
                .policy
                .clone()
                .or_else(|| file_config.forecast.policy.clone())
                .ok_or_else(|| CliError::input("toy backend needs --policy"))?;
            let saved: SavedPolicy = serde_json::from_str(
                &fs::read_to_string(&policy_path)
                    .map_err(|e| CliError::input(format!("{}: {e}", policy_path.display())))?,
            )
            .map_err(|e| CliError::input(format!("{}: {e}", policy_path.display())))?;
            let featurizer = Featurizer::fit(&questions, saved.feature_config.clone());
            let backend = ToyForecaster::new(
                ToyPolicy {
                    weights: saved.weights,
                },
                featurizer,
            );
            run_pure_backend(&backend, &pending, &forecasts_path)?;
        }
        "remote" => {
            let client = ChatClient::new(file_config.endpoint.clone())
                .map_err(|e| CliError::input(e.to_string()))?;
            let mut backend = RemoteForecaster::new(client);
            if let Some(template_path) = &file_config.prompt.template {
                let template = fs::read_to_string(template_path).map_err(|e| {
                    CliError::input(format!(
                        "cannot read template {}: {e}",
                        template_path.display()
                    ))
                })?;
                backend = backend
                    .with_template(template)
                    .map_err(|e| CliError::input(e.to_string()))?;
            }
            run_remote_backend(
                &backend,
                &questions,
                &pending,
                n_samples,
                file_config.forecast.group_epsilon_std,
                file_config.train.clamp_epsilon,
                &args.out,
                &forecasts_path,
            )?;
        }
        other => {
            return Err(CliError::input(format!(
                "unknown backend {other:?} (expected constant, remote, or toy)"
            )))
        }
    }

    finish_run(manifest, &args.out)?;
    println!(
        "forecast {} questions ({} resumed) -> {}",
        pending.len(),
        done.len(),
        forecasts_path.display()
    );
    Ok(())
}

fn parse_split(raw: &str) -> Result<Split, CliError> {
    match raw {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        "unresolved" => Ok(Split::Unresolved),
        other => Err(CliError::input(format!(
            "unknown split {other:?} (expected train, test, or unresolved)"
        ))),
    }
}

fn append_forecasts(path: &Path, forecasts: &[Forecast]) -> Result<(), CliError> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    for forecast in forecasts {
        serde_json::to_writer(&mut file, forecast)
            .map_err(|e| CliError::input(format!("serialize forecast: {e}")))?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn run_pure_backend(
    backend: &dyn Forecaster,
    pending: &[&ForecastingQuestion],
    forecasts_path: &Path,
) -> Result<(), CliError> {
    let mut forecasts = Vec::with_capacity(pending.len());
    for question in pending {
        forecasts.push(
            backend
                .forecast(question)
                .map_err(|e| CliError::input(e.to_string()))?,
        );
    }
    append_forecasts(forecasts_path, &forecasts)
}

#[allow(clippy::too_many_arguments)]
fn run_remote_backend(
    backend: &RemoteForecaster,
    all_questions: &[ForecastingQuestion],
    pending: &[&ForecastingQuestion],
    n_samples: usize,
    group_epsilon_std: Scalar,
    clamp_epsilon: Scalar,
    out_dir: &Path,
    forecasts_path: &Path,
) -> Result<(), CliError> {
    let workers = backend.config().max_parallelism;
    let multi_sample = n_samples >= 2;

    let results = run_parallel(pending, workers, |question| {
        if multi_sample {
            backend
                .rollouts(question, n_samples)
                .map(RemoteResult::Rollouts)
        } else {
            match backend.forecast(question) {
                Ok(forecast) => Ok(RemoteResult::One(Box::new(forecast))),
                Err(ForecastError::AnswerUnparseable {
                    question_id,
                    raw,
                    source,
                }) => Ok(RemoteResult::Unparseable {
                    question_id,
                    raw,
                    error: source.to_string(),
                }),
                Err(err) => Err(err),
            }
        }
    });

    let mut forecasts = Vec::new();
    let mut rollouts: Vec<Rollout> = Vec::new();
    let mut failures: Vec<serde_json::Value> = Vec::new();

    for result in results {
        match result.map_err(remote_error)? {
            RemoteResult::One(forecast) => forecasts.push(*forecast),
            RemoteResult::Unparseable {
                question_id,
                raw,
                error,
            } => {
                failures.push(serde_json::json!({
                    "question_id": question_id,
                    "error": error,
                    "raw": raw,
                }));
            }
            RemoteResult::Rollouts(samples) => {
                // the first parseable sample doubles as the point forecast
                if let Some(first) = samples.iter().find(|r| r.probability.is_some()) {
                    forecasts.push(Forecast {
                        question_id: first.question_id.clone(),
                        probability: first.probability.expect("filtered on is_some"),
                        reasoning: first.reasoning.clone(),
                        backend: backend.backend_name().to_string(),
                        latency_ms: None,
                    });
                } else if let Some(first) = samples.first() {
                    failures.push(serde_json::json!({
                        "question_id": first.question_id,
                        "error": "no parseable rollout",
                    }));
                }
                rollouts.extend(samples);
            }
        }
    }

    append_forecasts(forecasts_path, &forecasts)?;

    let transcripts = backend.drain_transcripts();
    if !transcripts.is_empty() {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("transcripts.jsonl"))?;
        for entry in &transcripts {
            serde_json::to_writer(&mut file, entry)
                .map_err(|e| CliError::input(format!("serialize transcript: {e}")))?;
            file.write_all(b"\n")?;
        }
    }
    if !failures.is_empty() {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(out_dir.join("failures.jsonl"))?;
        for failure in &failures {
            serde_json::to_writer(&mut file, failure)
                .map_err(|e| CliError::input(format!("serialize failure: {e}")))?;
            file.write_all(b"\n")?;
        }
        eprintln!(
            "warning: {} questions had unparseable answers",
            failures.len()
        );
    }

    if multi_sample && !rollouts.is_empty() {
        let mut rollout_file = fs::File::create(out_dir.join("rollouts.jsonl"))?;
        for rollout in &rollouts {
            serde_json::to_writer(&mut rollout_file, rollout)
                .map_err(|e| CliError::input(format!("serialize rollout: {e}")))?;
            rollout_file.write_all(b"\n")?;
        }

        let labels: BTreeMap<&str, bool> = all_questions
            .iter()
            .filter_map(|q| q.label.map(|y| (q.id.as_str(), y)))
            .collect();
        let labeled_rollouts: Vec<Rollout> = rollouts
            .iter()
            .filter(|r| labels.contains_key(r.question_id.as_str()))
            .cloned()
            .collect();
        if !labeled_rollouts.is_empty() {
            let records = advantage_batch(
                &labeled_rollouts,
                &|id| labels.get(id).copied(),
                clamp_epsilon,
                group_epsilon_std,
            )
            .map_err(|e| CliError::input(e.to_string()))?;
            let advantage_file = fs::File::create(out_dir.join("advantages.jsonl"))?;
            write_advantage_jsonl(advantage_file, &records)
                .map_err(|e| CliError::input(e.to_string()))?;
        }
    }
    Ok(())
}

enum RemoteResult {
    One(Box<Forecast>),
    Unparseable {
        question_id: String,
        raw: String,
        error: String,
    },
    Rollouts(Vec<Rollout>),
}

fn remote_error(err: ForecastError) -> CliError {
    match err {
        ForecastError::Client(client_err) => CliError::endpoint(client_err.to_string()),
        other => CliError::input(other.to_string()),
    }
}
