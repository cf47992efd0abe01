//! Log-score rewards, group-relative advantages, and the desk-scale
//! logistic trainer.
//!
//! The reward for probability p against outcome y is the log score
//!
//! ```text
//! r = y * ln(p~) + (1 - y) * ln(1 - p~),   p~ = clamp(p, eps, 1 - eps)
//! ```
//!
//! which is strictly proper: its expectation under y ~ Bernoulli(q) is
//! maximized at p = q. Advantages normalize rewards within a rollout
//! group: a_i = (r_i - mean) / (std_pop + eps_std). For a deterministic
//! logistic policy, ascending the mean reward is exactly logistic-regression
//! maximum likelihood, which is what the trainer does.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::num::{dot, mean, population_std, sigmoid, Real};
use crate::{Prob, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("advantage group needs at least 2 rollouts, got {0}")]
    GroupTooSmall(usize),
    #[error("question {question_id} has {got} rollouts, need at least {need}")]
    MissingRollouts {
        question_id: String,
        got: usize,
        need: usize,
    },
    #[error("training diverged at epoch {epoch}: non-finite weight (learning rate too high?)")]
    Diverged { epoch: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("clamp epsilon must lie in (0, 0.5), got {0}")]
    BadEpsilon(Scalar),
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(Scalar),
    #[error("feature dimension mismatch: weights {weights}, features {features}")]
    DimensionMismatch { weights: usize, features: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// One scored rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub question_id: String,
    pub rollout_index: usize,
    pub probability: Prob,
    pub outcome: bool,
    /// Log score; always in [ln(eps), 0].
    pub value: Scalar,
}

/// Rewards and their group-relative advantages for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub question_id: String,
    pub rewards: Vec<Scalar>,
    pub advantages: Vec<Scalar>,
}

impl AdvantageGroup {
    /// Normalizes a reward group; advantages are mean-zero and, when the
    /// rewards are not constant, unit-spread.
    pub fn from_rewards(
        question_id: &str,
        rewards: Vec<Scalar>,
        epsilon_std: Scalar,
    ) -> Result<Self, TrainError> {
        let advantages = group_advantages(&rewards, epsilon_std)?;
        Ok(AdvantageGroup {
            question_id: question_id.to_string(),
            rewards,
            advantages,
        })
    }
}

/// Log score with probability clamped away from 0 and 1.
pub fn log_score<T: Real>(p: T, outcome: bool, epsilon: T) -> T {
    let clamped = p.max(epsilon).min(T::one() - epsilon);
    if outcome {
        clamped.ln()
    } else {
        (T::one() - clamped).ln()
    }
}

/// Builds the [`Reward`] record for one rollout.
pub fn log_score_reward(
    question_id: &str,
    rollout_index: usize,
    p: Prob,
    outcome: bool,
    epsilon: Scalar,
) -> Result<Reward, TrainError> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(TrainError::BadEpsilon(epsilon));
    }
    Ok(Reward {
        question_id: question_id.to_string(),
        rollout_index,
        probability: p,
        outcome,
        value: log_score(p, outcome, epsilon),
    })
}

/// Group-relative advantages: (r - mean) / (std_pop + eps_std).
pub fn group_advantages<T: Real>(rewards: &[T], epsilon_std: T) -> Result<Vec<T>, TrainError> {
    if rewards.len() < 2 {
        return Err(TrainError::GroupTooSmall(rewards.len()));
    }
    let m = mean(rewards);
    let sd = population_std(rewards);
    Ok(rewards
        .iter()
        .map(|&r| (r - m) / (sd + epsilon_std))
        .collect())
}

/// Trainer settings. All randomness derives from `seed`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: Scalar,
    pub epochs: usize,
    pub batch_size: usize,
    pub clamp_epsilon: Scalar,
    pub l2: Scalar,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 300,
            batch_size: 256,
            clamp_epsilon: 1e-4,
            l2: 0.0,
            seed: 0,
        }
    }
}

/// One epoch of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_reward: Scalar,
    pub brier_on_validation: Scalar,
}

/// Mean clamped log-score reward of a logistic policy on a batch.
pub fn mean_reward<T: Real>(
    weights: &[T],
    features: &[Vec<T>],
    outcomes: &[bool],
    epsilon: T,
) -> T {
    let total: T = features
        .iter()
        .zip(outcomes)
        .map(|(x, &y)| log_score(sigmoid(dot(weights, x)), y, epsilon))
        .sum();
    total / T::from_count(features.len())
}

/// Analytic gradient of [`mean_reward`] with respect to the weights.
///
/// Inside the clamp region the per-example gradient is (y - p) x; where the
/// clamp is active the reward is locally constant, so the gradient is zero.
pub fn mean_reward_gradient<T: Real>(
    weights: &[T],
    features: &[Vec<T>],
    outcomes: &[bool],
    epsilon: T,
) -> Vec<T> {
    let mut grad = vec![T::zero(); weights.len()];
    for (x, &y) in features.iter().zip(outcomes) {
        accumulate_example_gradient(&mut grad, weights, x, y, epsilon);
    }
    let n = T::from_count(features.len());
    for g in grad.iter_mut() {
        *g = *g / n;
    }
    grad
}

fn accumulate_example_gradient<T: Real>(
    grad: &mut [T],
    weights: &[T],
    x: &[T],
    y: bool,
    epsilon: T,
) {
    let p = sigmoid(dot(weights, x));
    if p < epsilon || p > T::one() - epsilon {
        return;
    }
    let target = if y { T::one() } else { T::zero() };
    let coeff = target - p;
    for (g, &xi) in grad.iter_mut().zip(x) {
        *g += coeff * xi;
    }
}

/// Plain gradient ascent on the mean reward with optional L2 shrinkage.
///
/// Deterministic given the seed: mini-batch order is shuffled with a
/// seeded generator, weights start at zero. Returns the final weights and
/// the per-epoch curve (mean reward on the training set, Brier on the
/// validation set, or on the training set when no validation is supplied).
pub fn fit_logistic<T: Real>(
    features: &[Vec<T>],
    outcomes: &[bool],
    validation: Option<(&[Vec<T>], &[bool])>,
    config: &TrainConfig,
) -> Result<(Vec<T>, Vec<CurvePoint>), TrainError> {
    if features.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if !(config.clamp_epsilon > 0.0 && config.clamp_epsilon < 0.5) {
        return Err(TrainError::BadEpsilon(config.clamp_epsilon));
    }
    if config.learning_rate <= 0.0 {
        return Err(TrainError::BadLearningRate(config.learning_rate));
    }
    let dim = features[0].len();
    for x in features {
        if x.len() != dim {
            return Err(TrainError::DimensionMismatch {
                weights: dim,
                features: x.len(),
            });
        }
    }
    let epsilon = T::from_f64(config.clamp_epsilon).expect("epsilon fits scalar");
    let lr = T::from_f64(config.learning_rate).expect("learning rate fits scalar");
    let l2 = T::from_f64(config.l2).expect("l2 fits scalar");
    let batch_size = config.batch_size.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = vec![T::zero(); dim];
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    let mut grad = vec![T::zero(); dim];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            for g in grad.iter_mut() {
                *g = T::zero();
            }
            for &i in chunk {
                accumulate_example_gradient(
                    &mut grad,
                    &weights,
                    &features[i],
                    outcomes[i],
                    epsilon,
                );
            }
            let scale = lr / T::from_count(chunk.len());
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w = *w + scale * *g - lr * l2 * *w;
            }
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(TrainError::Diverged { epoch });
        }

        let epoch_reward = mean_reward(&weights, features, outcomes, epsilon);
        let (val_x, val_y) = validation.unwrap_or((features, outcomes));
        let val_preds: Vec<T> = val_x.iter().map(|x| sigmoid(dot(&weights, x))).collect();
        let val_brier = crate::metrics::brier(&val_preds, val_y)
            .map(|b| b.to_f64().unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN);
        curve.push(CurvePoint {
            epoch,
            mean_reward: epoch_reward.to_f64().unwrap_or(f64::NAN),
            brier_on_validation: val_brier,
        });
    }
    Ok((weights, curve))
}

/// Writes the training curve as CSV (`epoch,mean_reward,brier_on_validation`).
pub fn write_curve_csv<W: Write>(mut writer: W, curve: &[CurvePoint]) -> Result<(), TrainError> {
    writeln!(writer, "epoch,mean_reward,brier_on_validation")?;
    for point in curve {
        writeln!(
            writer,
            "{},{},{}",
            point.epoch, point.mean_reward, point.brier_on_validation
        )?;
    }
    Ok(())
}

/// One sampled model output for a question; `probability` is absent when
/// the answer could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub question_id: String,
    pub rollout_index: usize,
    pub probability: Option<Prob>,
    #[serde(default)]
    pub reasoning: String,
    #[serde(default)]
    pub parse_error: Option<String>,
}

/// One line of the exported advantage batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageRecord {
    pub question_id: String,
    pub rollout_index: usize,
    pub probability: Prob,
    pub reward: Scalar,
    pub advantage: Scalar,
    pub reasoning: String,
    /// True when the rollout was unparseable and scored at p = 0.5.
    pub fallback: bool,
}

/// Fallback probability for unparseable rollouts; keeps group sizes fixed
/// instead of silently changing group statistics.
pub const FALLBACK_PROBABILITY: Prob = 0.5;

/// Scores rollouts per question, normalizes within each group, and returns
/// records in (question_id, rollout_index) order.
pub fn advantage_batch(
    rollouts: &[Rollout],
    labels: &dyn Fn(&str) -> Option<bool>,
    clamp_epsilon: Scalar,
    epsilon_std: Scalar,
) -> Result<Vec<AdvantageRecord>, TrainError> {
    if rollouts.is_empty() {
        return Err(TrainError::MissingRollouts {
            question_id: "<none>".to_string(),
            got: 0,
            need: 2,
        });
    }
    let mut by_question: std::collections::BTreeMap<&str, Vec<&Rollout>> =
        std::collections::BTreeMap::new();
    for rollout in rollouts {
        by_question
            .entry(rollout.question_id.as_str())
            .or_default()
            .push(rollout);
    }

    let mut records = Vec::with_capacity(rollouts.len());
    for (question_id, mut samples) in by_question {
        if samples.len() < 2 {
            return Err(TrainError::MissingRollouts {
                question_id: question_id.to_string(),
                got: samples.len(),
                need: 2,
            });
        }
        let Some(outcome) = labels(question_id) else {
            return Err(TrainError::MissingRollouts {
                question_id: question_id.to_string(),
                got: samples.len(),
                need: 2,
            });
        };
        samples.sort_by_key(|r| r.rollout_index);

        let probabilities: Vec<(Prob, bool)> = samples
            .iter()
            .map(|r| match r.probability {
                Some(p) => (p, false),
                None => (FALLBACK_PROBABILITY, true),
            })
            .collect();
        let rewards: Vec<Scalar> = probabilities
            .iter()
            .map(|(p, _)| log_score(*p, outcome, clamp_epsilon))
            .collect();
        let group = AdvantageGroup::from_rewards(question_id, rewards, epsilon_std)?;

        for (((rollout, (p, fallback)), reward), advantage) in samples
            .iter()
            .zip(probabilities)
            .zip(group.rewards)
            .zip(group.advantages)
        {
            records.push(AdvantageRecord {
                question_id: rollout.question_id.clone(),
                rollout_index: rollout.rollout_index,
                probability: p,
                reward,
                advantage,
                reasoning: rollout.reasoning.clone(),
                fallback,
            });
        }
    }
    Ok(records)
}

/// Writes an advantage batch as JSONL.
pub fn write_advantage_jsonl<W: Write>(
    mut writer: W,
    records: &[AdvantageRecord],
) -> Result<(), TrainError> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads rollouts from JSONL.
pub fn read_rollouts_jsonl<R: BufRead>(reader: R) -> Result<Vec<Rollout>, TrainError> {
    let mut rollouts = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rollouts.push(serde_json::from_str(&line)?);
    }
    Ok(rollouts)
}
