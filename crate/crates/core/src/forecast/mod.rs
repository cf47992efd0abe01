//! Forecasting backends behind one interface: a constant historical
//! baseline, a remote chat endpoint, and a trainable logistic toy policy.
//!
//! All backends answer the same question payload; the rendered prompt for
//! a question is identical no matter which backend consumes it.

mod client;

pub use client::{AttemptRecord, ChatClient, ClientError, Completion, EndpointConfig};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::ForecastingQuestion;
use crate::index::{EntityId, MonthStamp};
use crate::num::{dot, sigmoid};
use crate::prompt::{parse_answer, render_prompt, render_prompt_with, PromptError};
use crate::training::Rollout;
use crate::{Prob, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("unparseable answer for {question_id}: {source}")]
    AnswerUnparseable {
        question_id: String,
        /// Raw model output, kept for audit.
        raw: String,
        source: PromptError,
    },
    #[error("policy has {weights} weights but features have dimension {features}")]
    DimensionMismatch { weights: usize, features: usize },
    #[error("constant rate {0} outside [0, 1]")]
    BadRate(Scalar),
    #[error("forecast for {question_id} has probability {probability} outside [0, 1]")]
    BadProbability {
        question_id: String,
        probability: Scalar,
    },
    #[error("prompt template: {0}")]
    BadTemplate(PromptError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A probabilistic forecast for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub question_id: String,
    pub probability: Prob,
    #[serde(default)]
    pub reasoning: String,
    pub backend: String,
    #[serde(default)]
    pub latency_ms: Option<u64>,
}

/// Uniform interface over forecasting backends.
pub trait Forecaster: Sync {
    fn backend_name(&self) -> &str;
    fn forecast(&self, question: &ForecastingQuestion) -> Result<Forecast, ForecastError>;
}

/// Predicts a fixed rate for every question (the historical baseline).
pub struct ConstantForecaster {
    rate: Prob,
    name: String,
}

impl ConstantForecaster {
    pub fn new(rate: Prob) -> Result<Self, ForecastError> {
        if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
            return Err(ForecastError::BadRate(rate));
        }
        Ok(ConstantForecaster {
            rate,
            name: format!("constant@{rate}"),
        })
    }
}

impl Forecaster for ConstantForecaster {
    fn backend_name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, question: &ForecastingQuestion) -> Result<Forecast, ForecastError> {
        Ok(Forecast {
            question_id: question.id.clone(),
            probability: self.rate,
            reasoning: String::new(),
            backend: self.name.clone(),
            latency_ms: None,
        })
    }
}

/// Feature extraction settings; the keyword buckets fix the vector
/// dimensionality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub keyword_buckets: Vec<String>,
    pub months_since_event_cap: u32,
    /// Keyword counts only consider articles published within this many
    /// months ending at the question month; older context articles inform
    /// text backends but are stale as numeric signals.
    pub signal_window_months: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            keyword_buckets: [
                "strike", "tariff", "sanction", "shortage", "flood", "port", "shutdown",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            months_since_event_cap: 24,
            signal_window_months: 1,
        }
    }
}

impl FeatureConfig {
    /// Dimensionality of the flattened feature vector (incl. bias).
    pub fn dim(&self) -> usize {
        4 + self.keyword_buckets.len() + 1
    }
}

/// Deterministic features for the toy policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub current_level: Scalar,
    pub last_change: Scalar,
    pub change_over_sigma: Scalar,
    pub months_since_event: u32,
    pub news_signal_counts: Vec<u32>,
}

impl FeatureVector {
    /// Flattens to [level, change, change/sigma, years_since_event,
    /// keyword counts..., bias=1]. The event recency enters in years so
    /// every coordinate stays O(1) for the optimizer.
    pub fn to_vec(&self) -> Vec<Scalar> {
        let mut v = Vec::with_capacity(4 + self.news_signal_counts.len() + 1);
        v.push(self.current_level);
        v.push(self.last_change);
        v.push(self.change_over_sigma);
        v.push(self.months_since_event as Scalar / 12.0);
        v.extend(self.news_signal_counts.iter().map(|&c| c as Scalar));
        v.push(1.0);
        v
    }
}

/// Feature extractor. Fitting on labeled questions records per-entity event
/// months so `months_since_event` can look back without look-ahead: a
/// question at month t sees only events whose event month is at most t,
/// i.e. outcomes already resolved in its information state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeatureConfig,
    event_months: BTreeMap<EntityId, Vec<MonthStamp>>,
}

impl Featurizer {
    pub fn new(config: FeatureConfig) -> Self {
        Featurizer {
            config,
            event_months: BTreeMap::new(),
        }
    }

    /// Records event months (t + 1 of each positively labeled question).
    pub fn fit(questions: &[ForecastingQuestion], config: FeatureConfig) -> Self {
        let mut event_months: BTreeMap<EntityId, Vec<MonthStamp>> = BTreeMap::new();
        for q in questions {
            if q.label == Some(true) {
                event_months
                    .entry(q.entity.clone())
                    .or_default()
                    .push(q.outcome_month());
            }
        }
        for months in event_months.values_mut() {
            months.sort_unstable();
            months.dedup();
        }
        Featurizer {
            config,
            event_months,
        }
    }

    pub fn features(&self, question: &ForecastingQuestion) -> FeatureVector {
        let cap = self.config.months_since_event_cap;
        let months_since_event = self
            .event_months
            .get(&question.entity)
            .and_then(|months| {
                months
                    .iter()
                    .rev()
                    .find(|&&m| m <= question.t)
                    .map(|&m| months_between(m, question.t).min(cap))
            })
            .unwrap_or(cap);

        let window = self.config.signal_window_months.max(1);
        let fresh: Vec<&crate::dataset::NewsArticle> = question
            .news
            .iter()
            .filter(|a| {
                use chrono::Datelike;
                match MonthStamp::new(a.published.year(), a.published.month()) {
                    Ok(m) => m <= question.t && months_between(m, question.t) < window,
                    Err(_) => false,
                }
            })
            .collect();
        let news_signal_counts = self
            .config
            .keyword_buckets
            .iter()
            .map(|keyword| {
                fresh
                    .iter()
                    .map(|a| count_token(&a.title, keyword) + count_token(&a.text, keyword))
                    .sum()
            })
            .collect();

        FeatureVector {
            current_level: question.current_index,
            last_change: question.prior_change,
            change_over_sigma: question.prior_change / question.sigma,
            months_since_event,
            news_signal_counts,
        }
    }
}

/// Whole months from `earlier` to `later`; zero when out of order.
fn months_between(earlier: MonthStamp, later: MonthStamp) -> u32 {
    let a = earlier.year() * 12 + earlier.month() as i32;
    let b = later.year() * 12 + later.month() as i32;
    (b - a).max(0) as u32
}

/// Case-insensitive whole-token occurrences of `keyword` in `text`.
fn count_token(text: &str, keyword: &str) -> u32 {
    let needle = keyword.to_lowercase();
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|token| !token.is_empty() && token.to_lowercase() == needle)
        .count() as u32
}

/// Stateless convenience: features without any event history (the
/// months-since-event signal saturates at its cap).
pub fn featurize(question: &ForecastingQuestion, config: &FeatureConfig) -> FeatureVector {
    Featurizer::new(config.clone()).features(question)
}

/// Logistic policy over flattened features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub weights: Vec<Scalar>,
}

impl ToyPolicy {
    pub fn zeros(dim: usize) -> Self {
        ToyPolicy {
            weights: vec![0.0; dim],
        }
    }
}

/// p = sigmoid(w . x); strictly inside (0, 1) for finite inputs.
pub fn toy_forecast(policy: &ToyPolicy, features: &FeatureVector) -> Result<Prob, ForecastError> {
    let x = features.to_vec();
    if x.len() != policy.weights.len() {
        return Err(ForecastError::DimensionMismatch {
            weights: policy.weights.len(),
            features: x.len(),
        });
    }
    Ok(sigmoid(dot(&policy.weights, &x)))
}

/// Trained policy plus the feature configuration it expects, as persisted
/// to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedPolicy {
    pub weights: Vec<Scalar>,
    pub feature_config: FeatureConfig,
}

/// The toy backend: a saved policy applied through a fitted featurizer.
pub struct ToyForecaster {
    policy: ToyPolicy,
    featurizer: Featurizer,
    name: String,
}

impl ToyForecaster {
    pub fn new(policy: ToyPolicy, featurizer: Featurizer) -> Self {
        ToyForecaster {
            policy,
            featurizer,
            name: "toy".to_string(),
        }
    }
}

impl Forecaster for ToyForecaster {
    fn backend_name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, question: &ForecastingQuestion) -> Result<Forecast, ForecastError> {
        let features = self.featurizer.features(question);
        let probability = toy_forecast(&self.policy, &features)?;
        Ok(Forecast {
            question_id: question.id.clone(),
            probability,
            reasoning: String::new(),
            backend: self.name.clone(),
            latency_ms: None,
        })
    }
}

/// Full audit record for one remote exchange.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub question_id: String,
    pub rollout_index: usize,
    pub request_body: String,
    pub attempts: Vec<AttemptRecord>,
}

/// The remote chat backend. Transcripts accumulate internally and are
/// drained by the orchestrator for persistence.
pub struct RemoteForecaster {
    client: ChatClient,
    name: String,
    template: Option<String>,
    transcripts: Mutex<Vec<TranscriptEntry>>,
}

impl RemoteForecaster {
    pub fn new(client: ChatClient) -> Self {
        let name = format!("remote@{}", client.config().model);
        RemoteForecaster {
            client,
            name,
            template: None,
            transcripts: Mutex::new(Vec::new()),
        }
    }

    /// Overrides the built-in prompt template.
    pub fn with_template(mut self, template: String) -> Result<Self, ForecastError> {
        // fail fast on a template missing placeholders
        let probe = ForecastingQuestion {
            id: String::new(),
            entity: EntityId::product("probe").expect("static name"),
            t: MonthStamp::new(2000, 1).expect("static month"),
            current_index: 0.0,
            prior_change: 0.0,
            sigma: 1.0,
            news: Vec::new(),
            label: None,
            split: crate::dataset::Split::Unresolved,
        };
        render_prompt_with(&probe, &template).map_err(ForecastError::BadTemplate)?;
        self.template = Some(template);
        Ok(self)
    }

    pub fn config(&self) -> &EndpointConfig {
        self.client.config()
    }

    /// Removes and returns all transcripts recorded so far.
    pub fn drain_transcripts(&self) -> Vec<TranscriptEntry> {
        std::mem::take(&mut self.transcripts.lock().expect("transcript lock"))
    }

    fn record(&self, entry: TranscriptEntry) {
        self.transcripts
            .lock()
            .expect("transcript lock")
            .push(entry);
    }

    fn exchange(
        &self,
        question: &ForecastingQuestion,
        rollout_index: usize,
    ) -> Result<Completion, ForecastError> {
        let prompt = match &self.template {
            Some(template) => {
                render_prompt_with(question, template).map_err(ForecastError::BadTemplate)?
            }
            None => render_prompt(question),
        };
        let completion = self.client.complete(&prompt.text)?;
        self.record(TranscriptEntry {
            question_id: question.id.clone(),
            rollout_index,
            request_body: completion.request_body.clone(),
            attempts: completion.attempts.clone(),
        });
        Ok(completion)
    }

    /// Samples `n` rollouts for one question. Unparseable answers become
    /// rollouts without a probability; endpoint exhaustion aborts.
    pub fn rollouts(
        &self,
        question: &ForecastingQuestion,
        n: usize,
    ) -> Result<Vec<Rollout>, ForecastError> {
        (0..n.max(1))
            .map(|rollout_index| {
                let completion = self.exchange(question, rollout_index)?;
                Ok(match parse_answer(&completion.content) {
                    Ok(parsed) => Rollout {
                        question_id: question.id.clone(),
                        rollout_index,
                        probability: Some(parsed.probability),
                        reasoning: parsed.reasoning,
                        parse_error: None,
                    },
                    Err(err) => Rollout {
                        question_id: question.id.clone(),
                        rollout_index,
                        probability: None,
                        reasoning: completion.content,
                        parse_error: Some(err.to_string()),
                    },
                })
            })
            .collect()
    }
}

impl Forecaster for RemoteForecaster {
    fn backend_name(&self) -> &str {
        &self.name
    }

    fn forecast(&self, question: &ForecastingQuestion) -> Result<Forecast, ForecastError> {
        let completion = self.exchange(question, 0)?;
        let parsed = parse_answer(&completion.content).map_err(|source| {
            ForecastError::AnswerUnparseable {
                question_id: question.id.clone(),
                raw: completion.content.clone(),
                source,
            }
        })?;
        Ok(Forecast {
            question_id: question.id.clone(),
            probability: parsed.probability,
            reasoning: parsed.reasoning,
            backend: self.name.clone(),
            latency_ms: Some(completion.latency_ms),
        })
    }
}

/// Runs `work` over items on up to `workers` threads, returning results in
/// input order regardless of completion order.
pub fn run_parallel<T, R, F>(items: &[T], workers: usize, work: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = work(&items[i]);
                *slots[i].lock().expect("result slot lock") = Some(result);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("result slot lock")
                .expect("every slot filled")
        })
        .collect()
}

/// Writes forecasts as JSONL in the given order.
pub fn write_forecasts_jsonl<W: Write>(
    mut writer: W,
    forecasts: &[Forecast],
) -> Result<(), ForecastError> {
    for forecast in forecasts {
        serde_json::to_writer(&mut writer, forecast)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads forecasts from JSONL.
pub fn read_forecasts_jsonl<R: BufRead>(reader: R) -> Result<Vec<Forecast>, ForecastError> {
    let mut forecasts = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let forecast: Forecast = serde_json::from_str(&line)?;
        if !(0.0..=1.0).contains(&forecast.probability) {
            return Err(ForecastError::BadProbability {
                question_id: forecast.question_id,
                probability: forecast.probability,
            });
        }
        forecasts.push(forecast);
    }
    Ok(forecasts)
}
