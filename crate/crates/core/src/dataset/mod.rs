//! Forecasting-question construction with a hard look-ahead guard, plus the
//! chronological train/test split.
//!
//! A question for (entity, t) carries the index state at t, the entity's
//! volatility threshold estimated at or before the split boundary, a news
//! context restricted to articles published by the last day of month t, and
//! the resolved next-month label when the outcome is already observed.

mod adapter;
mod news;

pub use adapter::{load_adapted_questions, AdapterConfig};
pub use news::{read_news_jsonl, write_news_jsonl, NewsArticle};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::index::{
    estimate_sigma, label_event_with, monthly_change, EntityId, EntityKind, IndexError,
    IndexSeries, MonthStamp,
};
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no questions produced from the given inputs")]
    EmptyDataset,
    #[error("chronological leakage: train month {max_train} >= test month {min_test}; offending questions: {}", offenders.join(", "))]
    LeakageDetected {
        max_train: MonthStamp,
        min_test: MonthStamp,
        offenders: Vec<String>,
    },
    #[error("look-ahead violation in question {question_id}: article {article_id} published {published} after end of {month}")]
    LookAheadViolation {
        question_id: String,
        article_id: String,
        published: chrono::NaiveDate,
        month: MonthStamp,
    },
    #[error("corpus article {article_id} published {published} is dated after the dataset information horizon ({horizon})")]
    FutureArticle {
        article_id: String,
        published: chrono::NaiveDate,
        horizon: MonthStamp,
    },
    #[error("question {question_id}: {message}")]
    InvalidQuestion {
        question_id: String,
        message: String,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("adapter: {0}")]
    Adapter(String),
}

/// Which side of the chronological boundary a question falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    /// The next-month index is not observed yet; excluded from all metrics.
    Unresolved,
}

/// One forecasting question: predict whether entity `entity` experiences a
/// disruption event in the month after `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastingQuestion {
    pub id: String,
    pub entity: EntityId,
    pub t: MonthStamp,
    pub current_index: Scalar,
    pub prior_change: Scalar,
    pub sigma: Scalar,
    pub news: Vec<NewsArticle>,
    #[serde(with = "label_serde")]
    pub label: Option<bool>,
    pub split: Split,
}

// Labels serialize as 0/1 or null.
mod label_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
        match label {
            Some(v) => s.serialize_u8(u8::from(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
        let raw: Option<u8> = Option::deserialize(d)?;
        match raw {
            None => Ok(None),
            Some(0) => Ok(Some(false)),
            Some(1) => Ok(Some(true)),
            Some(other) => Err(serde::de::Error::custom(format!(
                "label must be 0, 1, or null, got {other}"
            ))),
        }
    }
}

impl ForecastingQuestion {
    /// Canonical question id: `kind:name:YYYY-MM`.
    pub fn make_id(entity: &EntityId, t: MonthStamp) -> String {
        format!("{}:{}:{}", entity.kind(), entity.name(), t)
    }

    /// The month in which the question resolves.
    pub fn outcome_month(&self) -> MonthStamp {
        self.t.successor()
    }
}

/// Counts and label statistics for a set of questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_questions: usize,
    pub n_countries: usize,
    pub n_products: usize,
    pub span: Option<(MonthStamp, MonthStamp)>,
    /// Mean label over resolved questions; 0.0 when none are resolved.
    pub event_rate: Scalar,
    pub n_labeled: usize,
}

impl DatasetSummary {
    pub fn from_questions(questions: &[&ForecastingQuestion]) -> DatasetSummary {
        let mut countries: Vec<&str> = Vec::new();
        let mut products: Vec<&str> = Vec::new();
        for q in questions {
            match q.entity.kind() {
                EntityKind::Country => countries.push(q.entity.name()),
                EntityKind::Product => products.push(q.entity.name()),
            }
        }
        countries.sort_unstable();
        countries.dedup();
        products.sort_unstable();
        products.dedup();

        let span = match (
            questions.iter().map(|q| q.t).min(),
            questions.iter().map(|q| q.t).max(),
        ) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        };

        let labels: Vec<bool> = questions.iter().filter_map(|q| q.label).collect();
        let event_rate = if labels.is_empty() {
            0.0
        } else {
            labels.iter().filter(|&&y| y).count() as Scalar / labels.len() as Scalar
        };

        DatasetSummary {
            n_questions: questions.len(),
            n_countries: countries.len(),
            n_products: products.len(),
            span,
            event_rate,
            n_labeled: labels.len(),
        }
    }
}

/// Controls for question construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    /// Earliest prediction month to emit.
    pub start: MonthStamp,
    /// Maximum number of context articles per question.
    pub max_articles: usize,
    /// Use strict `>` instead of `>=` when resolving events.
    pub strict_threshold: bool,
    /// Extra entities whose articles also count as context for a given
    /// entity, keyed by `kind:name`.
    pub related_entities: BTreeMap<String, Vec<EntityId>>,
    /// What the corpus `text` field holds (raw article text, summaries,
    /// or headlines); recorded in the run manifest, not interpreted.
    pub news_representation: String,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            start: MonthStamp::new(2022, 1).expect("valid default start month"),
            max_articles: 8,
            strict_threshold: false,
            related_entities: BTreeMap::new(),
            news_representation: "as-provided".to_string(),
        }
    }
}

/// Selects up to `max_articles` context articles for (entity, t): tagged
/// with the entity (or a configured related entity) and published no later
/// than the last day of month t, most recent first.
pub fn attach_news_context<'a>(
    entity: &EntityId,
    t: MonthStamp,
    corpus: &'a [NewsArticle],
    max_articles: usize,
    related: &[EntityId],
) -> Vec<&'a NewsArticle> {
    let horizon = t.last_day();
    let mut matched: Vec<&NewsArticle> = corpus
        .iter()
        .filter(|a| a.published <= horizon)
        .filter(|a| a.entities.contains(entity) || related.iter().any(|r| a.entities.contains(r)))
        .collect();
    // Most recent first; id breaks date ties so output is stable.
    matched.sort_by(|a, b| b.published.cmp(&a.published).then_with(|| a.id.cmp(&b.id)));
    matched.truncate(max_articles);
    matched
}

/// Builds the full question set from index series and a news corpus.
///
/// One question per (entity, t) where both I(t-1) and I(t) are observed and
/// t >= the configured start month. Sigma comes from `estimate_sigma` with
/// cutoff at the boundary; entities without a positive sigma are dropped.
/// Questions whose outcome month lies beyond the series are emitted as
/// unresolved; questions whose outcome month falls in an interior gap are
/// skipped.
pub fn build_questions(
    indexes: &[IndexSeries],
    corpus: &[NewsArticle],
    boundary: MonthStamp,
    config: &BuildConfig,
) -> Result<Vec<ForecastingQuestion>, DatasetError> {
    let mut questions = Vec::new();

    for series in indexes {
        let entity = series.entity().clone();
        let sigma = match estimate_sigma(series, boundary) {
            Ok(est) if est.sigma > 0.0 => est.sigma,
            Ok(_) => {
                log::warn!("dropping {entity}: sigma is zero on the training span");
                continue;
            }
            Err(err) => {
                log::warn!("dropping {entity}: {err}");
                continue;
            }
        };
        let related = config
            .related_entities
            .get(&entity.to_string())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let last_month = series.last_month().expect("series with sigma is non-empty");

        for (t, _value) in series.observations() {
            let t = *t;
            if t < config.start {
                continue;
            }
            let prior_change = match monthly_change(series, t) {
                Ok(delta) => delta,
                Err(_) => continue, // gap at t-1: no question
            };
            let current_index = series.value(t).expect("t is observed");

            let outcome_month = t.successor();
            let (label, split) = match series.value(outcome_month) {
                Some(next_value) => {
                    let y = label_event_with(
                        current_index,
                        next_value,
                        sigma,
                        config.strict_threshold,
                    )?;
                    let split = if t <= boundary {
                        Split::Train
                    } else {
                        Split::Test
                    };
                    (Some(y), split)
                }
                None if outcome_month > last_month => (None, Split::Unresolved),
                None => continue, // interior gap: outcome can never resolve
            };

            let news = attach_news_context(&entity, t, corpus, config.max_articles, related)
                .into_iter()
                .cloned()
                .collect();

            questions.push(ForecastingQuestion {
                id: ForecastingQuestion::make_id(&entity, t),
                entity: entity.clone(),
                t,
                current_index,
                prior_change,
                sigma,
                news,
                label,
                split,
            });
        }
    }

    if questions.is_empty() {
        return Err(DatasetError::EmptyDataset);
    }
    questions.sort_by(|a, b| a.entity.cmp(&b.entity).then_with(|| a.t.cmp(&b.t)));
    Ok(questions)
}

/// Per-split summaries plus the boundary-ordering verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: DatasetSummary,
    pub test: DatasetSummary,
    pub unresolved: DatasetSummary,
    pub max_train_month: Option<MonthStamp>,
    pub min_test_month: Option<MonthStamp>,
    /// True when the test split is empty and ordering is vacuous.
    pub vacuous: bool,
}

/// Asserts the chronological split: every train month strictly precedes
/// every test month. An empty test split passes vacuously.
pub fn chronological_split_check(
    questions: &[ForecastingQuestion],
) -> Result<SplitReport, DatasetError> {
    let select = |split: Split| -> Vec<&ForecastingQuestion> {
        questions.iter().filter(|q| q.split == split).collect()
    };
    let train = select(Split::Train);
    let test = select(Split::Test);
    let unresolved = select(Split::Unresolved);

    let max_train_month = train.iter().map(|q| q.t).max();
    let min_test_month = test.iter().map(|q| q.t).min();

    if let (Some(max_train), Some(min_test)) = (max_train_month, min_test_month) {
        if max_train >= min_test {
            let offenders: Vec<String> = questions
                .iter()
                .filter(|q| {
                    (q.split == Split::Train && q.t >= min_test)
                        || (q.split == Split::Test && q.t <= max_train)
                })
                .map(|q| q.id.clone())
                .collect();
            return Err(DatasetError::LeakageDetected {
                max_train,
                min_test,
                offenders,
            });
        }
    }
    if test.is_empty() {
        log::warn!("test split is empty; chronological ordering holds vacuously");
    }

    Ok(SplitReport {
        train: DatasetSummary::from_questions(&train),
        test: DatasetSummary::from_questions(&test),
        unresolved: DatasetSummary::from_questions(&unresolved),
        max_train_month,
        min_test_month,
        vacuous: test.is_empty(),
    })
}

/// Verifies one question is free of look-ahead: every attached article is
/// published by the last day of month t.
pub fn leakage_check(question: &ForecastingQuestion) -> Result<(), DatasetError> {
    let horizon = question.t.last_day();
    for article in &question.news {
        if article.published > horizon {
            return Err(DatasetError::LookAheadViolation {
                question_id: question.id.clone(),
                article_id: article.id.clone(),
                published: article.published,
                month: question.t,
            });
        }
    }
    Ok(())
}

/// Audits a corpus against the dataset's information horizon: the latest
/// prediction month among `questions`. An article dated after the end of
/// that month cannot belong to any valid context and indicates the corpus
/// snapshot was taken from the future relative to the dataset's "as of"
/// state.
pub fn corpus_horizon_check(
    questions: &[ForecastingQuestion],
    corpus: &[NewsArticle],
) -> Result<(), DatasetError> {
    let Some(horizon) = questions.iter().map(|q| q.t).max() else {
        return Ok(());
    };
    let horizon_day = horizon.last_day();
    for article in corpus {
        if article.published > horizon_day {
            return Err(DatasetError::FutureArticle {
                article_id: article.id.clone(),
                published: article.published,
                horizon,
            });
        }
    }
    Ok(())
}

/// Writes questions as JSONL, one per line, in their given order.
pub fn write_questions_jsonl<W: Write>(
    mut writer: W,
    questions: &[ForecastingQuestion],
) -> Result<(), DatasetError> {
    for q in questions {
        serde_json::to_writer(&mut writer, q)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads questions from JSONL.
pub fn read_questions_jsonl<R: BufRead>(
    reader: R,
) -> Result<Vec<ForecastingQuestion>, DatasetError> {
    let mut questions = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let question: ForecastingQuestion = serde_json::from_str(&line)?;
        if !(question.sigma > 0.0 && question.sigma.is_finite()) {
            return Err(DatasetError::InvalidQuestion {
                question_id: question.id,
                message: format!("sigma must be positive and finite, got {}", question.sigma),
            });
        }
        questions.push(question);
    }
    Ok(questions)
}

#[cfg(test)]
mod tests;
