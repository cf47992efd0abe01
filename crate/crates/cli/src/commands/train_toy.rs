//! `shockcast train-toy`: gradient ascent on the log-score reward for the
//! logistic policy, over the train split of a question set.

use std::fs;
use std::path::PathBuf;

use clap::Args as ClapArgs;
use shockcast::dataset::{ForecastingQuestion, Split};
use shockcast::forecast::{Featurizer, SavedPolicy};
use shockcast::training::{fit_logistic, write_curve_csv};
use shockcast::Scalar;

use crate::config::FileConfig;
use crate::CliError;

use super::{finish_run, load_questions, start_run};

#[derive(ClapArgs)]
pub struct Args {
    /// Question set with a labeled train split.
    #[arg(long)]
    questions: PathBuf,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Separate validation question set; defaults to the labeled test
    /// split of --questions, or the training set when there is none.
    #[arg(long)]
    validation: Option<PathBuf>,

    #[arg(long)]
    learning_rate: Option<Scalar>,

    #[arg(long)]
    epochs: Option<usize>,

    #[arg(long)]
    batch_size: Option<usize>,

    /// Column-mapping TOML for externally formatted question files.
    #[arg(long)]
    adapter: Option<PathBuf>,
}

pub fn run(args: Args, file_config: &FileConfig, seed: u64) -> Result<(), CliError> {
    let mut train_config = file_config.train.clone();
    train_config.seed = seed;
    if let Some(lr) = args.learning_rate {
        train_config.learning_rate = lr;
    }
    if let Some(epochs) = args.epochs {
        train_config.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        train_config.batch_size = batch;
    }

    let mut inputs = vec![args.questions.clone()];
    if let Some(validation) = &args.validation {
        inputs.push(validation.clone());
    }
    let manifest = start_run(
        "train-toy",
        serde_json::json!({
            "train": train_config,
            "features": file_config.features,
        }),
        &inputs,
        &args.out,
    )?;

    let questions = load_questions(&args.questions, args.adapter.as_deref())?;
    let train: Vec<&ForecastingQuestion> = questions
        .iter()
        .filter(|q| q.split == Split::Train && q.label.is_some())
        .collect();
    if train.is_empty() {
        return Err(CliError::input("no labeled train questions"));
    }

    let train_owned: Vec<ForecastingQuestion> = train.iter().map(|&q| q.clone()).collect();
    let featurizer = Featurizer::fit(&train_owned, file_config.features.clone());
    let features: Vec<Vec<Scalar>> = train
        .iter()
        .map(|q| featurizer.features(q).to_vec())
        .collect();
    let outcomes: Vec<bool> = train.iter().map(|q| q.label.expect("filtered")).collect();

    let validation_questions: Vec<ForecastingQuestion> = match &args.validation {
        Some(path) => load_questions(path, args.adapter.as_deref())?
            .into_iter()
            .filter(|q| q.label.is_some())
            .collect(),
        None => questions
            .iter()
            .filter(|q| q.split == Split::Test && q.label.is_some())
            .cloned()
            .collect(),
    };
    let validation_features: Vec<Vec<Scalar>> = validation_questions
        .iter()
        .map(|q| featurizer.features(q).to_vec())
        .collect();
    let validation_outcomes: Vec<bool> = validation_questions
        .iter()
        .map(|q| q.label.expect("filtered"))
        .collect();
    let validation = if validation_features.is_empty() {
        None
    } else {
        Some((
            validation_features.as_slice(),
            validation_outcomes.as_slice(),
        ))
    };

    let (weights, curve) = fit_logistic(&features, &outcomes, validation, &train_config)
        .map_err(|e| CliError::input(e.to_string()))?;

    let saved = SavedPolicy {
        weights,
        feature_config: file_config.features.clone(),
    };
    fs::write(
        args.out.join("policy.json"),
        serde_json::to_string_pretty(&saved).expect("policy serializes"),
    )?;
    write_curve_csv(fs::File::create(args.out.join("curve.csv"))?, &curve)
        .map_err(|e| CliError::input(e.to_string()))?;
    finish_run(manifest, &args.out)?;

    let last = curve.last().expect("at least one epoch");
    println!(
        "trained on {} questions for {} epochs: mean reward {:.4}, validation brier {:.4}",
        train.len(),
        curve.len(),
        last.mean_reward,
        last.brier_on_validation,
    );
    println!("wrote {}", args.out.join("policy.json").display());
    Ok(())
}
