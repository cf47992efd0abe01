//! Synthetic index series and news corpora from a known data-generating
//! process, so pipeline, training, and calibration claims can be checked
//! against ground truth.
//!
//! Per entity and month, a signal article appears with probability
//! `signal_rate`; the next-month event then occurs with the configured
//! conditional probability. Event months draw a large positive change, calm
//! months draw a small two-valued one, and generation verifies that the
//! volatility threshold estimated at any cutoff from the warmup end onward
//! separates the two regimes exactly — so resolving events through the real
//! labeling path reproduces the generator's flags, never bypassing it.
//!
//! The first warmup months contain two forced shocks, which keeps the
//! estimated threshold above the calm amplitude even when no organic shock
//! lands in a short training window. Oracle rows only cover post-warmup
//! months, where the conditional probabilities are honest.

use std::io::Write;

use chrono::NaiveDate;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::NewsArticle;
use crate::derive_seed;
use crate::forecast::FeatureConfig;
use crate::index::{EntityId, EntityKind, IndexSeries, MonthStamp};
use crate::num::sigmoid;
use crate::{Prob, Scalar};

/// Months of history generated before the first oracle-covered question.
pub const WARMUP_MONTHS: usize = 24;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible config: {0}")]
    InfeasibleConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Generator settings. Probabilities are conditional on the presence of a
/// signal article in the question month.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_entities: usize,
    /// Observed months per entity, including warmup.
    pub n_months: usize,
    /// Amplitude of calm month-over-month changes.
    pub base_volatility: Scalar,
    pub shock_probability_given_signal: Prob,
    pub shock_probability_no_signal: Prob,
    pub signal_rate: Prob,
    /// Center of the shock change distribution (drawn within +-10%).
    pub shock_magnitude_mean: Scalar,
    pub seed: u64,
    /// First observed month.
    pub start: MonthStamp,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_entities: 20,
            n_months: 72,
            base_volatility: 0.1,
            shock_probability_given_signal: 0.6,
            shock_probability_no_signal: 0.05,
            signal_rate: 0.2,
            shock_magnitude_mean: 1.0,
            seed: 0,
            start: MonthStamp::new(2020, 1).expect("valid default start"),
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        for (name, p) in [
            (
                "shock_probability_given_signal",
                self.shock_probability_given_signal,
            ),
            (
                "shock_probability_no_signal",
                self.shock_probability_no_signal,
            ),
            ("signal_rate", self.signal_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::InfeasibleConfig(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        if self.shock_probability_given_signal < self.shock_probability_no_signal {
            return Err(SynthError::InfeasibleConfig(
                "shock probability given signal must be >= without signal".into(),
            ));
        }
        if self.base_volatility <= 0.0 {
            return Err(SynthError::InfeasibleConfig(
                "base_volatility must be positive".into(),
            ));
        }
        if self.shock_magnitude_mean < 6.0 * self.base_volatility {
            return Err(SynthError::InfeasibleConfig(format!(
                "shock_magnitude_mean {} cannot realize the event probabilities: needs at least 6 x base_volatility ({})",
                self.shock_magnitude_mean,
                6.0 * self.base_volatility
            )));
        }
        if self.n_months < WARMUP_MONTHS + 3 {
            return Err(SynthError::InfeasibleConfig(format!(
                "n_months must exceed warmup ({WARMUP_MONTHS}) by at least 3"
            )));
        }
        if self.n_entities == 0 {
            return Err(SynthError::InfeasibleConfig(
                "n_entities must be positive".into(),
            ));
        }
        Ok(())
    }

    /// First month whose oracle row is honest (the warmup end).
    pub fn question_start(&self) -> MonthStamp {
        let mut m = self.start;
        for _ in 0..WARMUP_MONTHS {
            m = m.successor();
        }
        m
    }
}

/// Ground truth for one (entity, question month).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub entity: EntityId,
    pub t: MonthStamp,
    pub signal: bool,
    /// True P(event in t+1 | signal state).
    pub p_true: Prob,
    /// Realized event flag; absent for the final (unresolvable) month.
    pub event: Option<bool>,
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub indexes: Vec<IndexSeries>,
    pub corpus: Vec<NewsArticle>,
    pub oracle: Vec<OracleRow>,
    /// Earliest month usable as a question start or split boundary.
    pub question_start: MonthStamp,
}

/// Generates indexes, corpus, and oracle table. Deterministic given the
/// seed; entities are generated from independently derived seeds.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let keyword = signal_keyword();

    let mut indexes = Vec::with_capacity(config.n_entities);
    let mut corpus = Vec::new();
    let mut oracle = Vec::new();

    for i in 0..config.n_entities {
        let kind = if i % 2 == 0 {
            EntityKind::Product
        } else {
            EntityKind::Country
        };
        let entity =
            EntityId::new(kind, &format!("entity_{i:04}")).expect("generated names are non-empty");
        let entity_seed = derive_seed(config.seed, &entity.to_string());
        let mut rng = ChaCha8Rng::seed_from_u64(entity_seed);

        let generated = generate_entity(config, &entity, &keyword, &mut rng)?;
        indexes.push(generated.series);
        corpus.extend(generated.articles);
        oracle.extend(generated.oracle_rows);
    }

    Ok(SynthOutput {
        indexes,
        corpus,
        oracle,
        question_start: config.question_start(),
    })
}

/// The keyword planted in signal articles: the first default feature
/// bucket, so the toy policy can learn it out of the box.
pub fn signal_keyword() -> String {
    FeatureConfig::default().keyword_buckets[0].clone()
}

struct GeneratedEntity {
    series: IndexSeries,
    articles: Vec<NewsArticle>,
    oracle_rows: Vec<OracleRow>,
}

fn generate_entity(
    config: &SynthConfig,
    entity: &EntityId,
    keyword: &str,
    rng: &mut ChaCha8Rng,
) -> Result<GeneratedEntity, SynthError> {
    let n = config.n_months;

    // months[j] is the calendar month of observation j
    let mut months = Vec::with_capacity(n);
    let mut m = config.start;
    for _ in 0..n {
        months.push(m);
        m = m.successor();
    }

    // two forced warmup shocks so every admissible estimation window mixes
    // both regimes
    let forced_a = rng.random_range(2..WARMUP_MONTHS / 2);
    let forced_b = rng.random_range(WARMUP_MONTHS / 2..=WARMUP_MONTHS);

    let anchor: Scalar = rng.random_range(0.8..1.2);
    let mut level = anchor;
    let mut values = Vec::with_capacity(n);
    values.push(level);

    // changes[j] drives observation j; is_shock[j] is the event flag
    let mut changes: Vec<Scalar> = vec![0.0];
    let mut is_shock: Vec<bool> = vec![false];
    let mut articles = Vec::new();
    let mut oracle_rows = Vec::new();

    // warmup changes for observations 1..=WARMUP_MONTHS
    for j in 1..=WARMUP_MONTHS.min(n - 1) {
        let shock = j == forced_a || j == forced_b;
        let change = draw_change(shock, level, anchor, config, rng);
        level += change;
        values.push(level);
        changes.push(change);
        is_shock.push(shock);
    }

    // honest region: the signal at month j decides the change at j + 1
    for (j, &t) in months.iter().enumerate().skip(WARMUP_MONTHS) {
        let signal = rng.random_bool(config.signal_rate);
        if signal {
            let day = rng.random_range(1..=28);
            articles.push(NewsArticle {
                id: format!("synth:{entity}:{t}"),
                published: NaiveDate::from_ymd_opt(t.year(), t.month(), day)
                    .expect("days 1..=28 exist in every month"),
                title: format!("Labor {keyword} disrupts shipments"),
                text: format!(
                    "A prolonged {keyword} is under way; suppliers report {keyword}-related slowdowns."
                ),
                entities: vec![entity.clone()],
            });
        }
        let p_true = if signal {
            config.shock_probability_given_signal
        } else {
            config.shock_probability_no_signal
        };

        let event = if j + 1 < n {
            let shock = rng.random_bool(p_true);
            let change = draw_change(shock, level, anchor, config, rng);
            level += change;
            values.push(level);
            changes.push(change);
            is_shock.push(shock);
            Some(shock)
        } else {
            None
        };
        oracle_rows.push(OracleRow {
            entity: entity.clone(),
            t,
            signal,
            p_true,
            event,
        });
    }

    verify_threshold_separation(entity, &changes, &is_shock)?;

    let series = IndexSeries::new(entity.clone(), months.into_iter().zip(values).collect())
        .expect("generated months are strictly increasing");
    Ok(GeneratedEntity {
        series,
        articles,
        oracle_rows,
    })
}

/// Calm changes are exactly +-base_volatility; a mild pull toward the
/// entity's anchor level keeps the index from drifting after shocks. Only
/// the sign varies, so regime separation depends on magnitudes alone.
fn draw_change(
    shock: bool,
    level: Scalar,
    anchor: Scalar,
    config: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> Scalar {
    if shock {
        return config.shock_magnitude_mean * rng.random_range(0.9..1.1);
    }
    let calm = config.base_volatility;
    let band = config.shock_magnitude_mean / 2.0;
    let upward = if level > anchor + band {
        false
    } else if level < anchor - band {
        true
    } else {
        rng.random_bool(0.5)
    };
    if upward {
        calm
    } else {
        -calm
    }
}

/// Checks that for every cutoff from the warmup end to the last month, the
/// estimated volatility lands strictly above every calm change and at or
/// below every shock change — the exact condition for the labeling path to
/// reproduce the generator's flags.
fn verify_threshold_separation(
    entity: &EntityId,
    changes: &[Scalar],
    is_shock: &[bool],
) -> Result<(), SynthError> {
    let max_calm = changes
        .iter()
        .zip(is_shock)
        .skip(1)
        .filter(|(_, &s)| !s)
        .map(|(&c, _)| c)
        .fold(Scalar::NEG_INFINITY, Scalar::max);
    let min_shock = changes
        .iter()
        .zip(is_shock)
        .skip(1)
        .filter(|(_, &s)| s)
        .map(|(&c, _)| c)
        .fold(Scalar::INFINITY, Scalar::min);

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (j, &change) in changes.iter().enumerate().skip(1) {
        sum += change;
        sum_sq += change * change;
        if j < WARMUP_MONTHS {
            continue;
        }
        let k = j as Scalar;
        let sigma = (sum_sq / k - (sum / k).powi(2)).max(0.0).sqrt();
        if !(max_calm < sigma && sigma <= min_shock) {
            return Err(SynthError::InfeasibleConfig(format!(
                "{entity}: estimated sigma {sigma:.4} at cutoff {j} does not separate calm (max {max_calm:.4}) from shock (min {min_shock:.4}); adjust magnitudes"
            )));
        }
    }
    Ok(())
}

/// Writes the oracle table as CSV.
pub fn write_oracle_csv<W: Write>(mut writer: W, rows: &[OracleRow]) -> Result<(), SynthError> {
    writeln!(
        writer,
        "entity_kind,entity_name,year,month,signal,p_true,event"
    )?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            row.entity.kind(),
            row.entity.name(),
            row.t.year(),
            row.t.month(),
            u8::from(row.signal),
            row.p_true,
            row.event
                .map(|e| u8::from(e).to_string())
                .unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Calibrated prediction/outcome pairs: p ~ Uniform[0, 1], y ~ Bernoulli(p).
pub fn calibrated_pairs(n: usize, seed: u64) -> Vec<(Prob, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let p: Prob = rng.random_range(0.0..1.0);
            (p, rng.random_bool(p))
        })
        .collect()
}

/// Single-feature logistic process: s ~ Uniform[-2, 2],
/// P(y = 1 | s) = sigmoid(weight * s). Features are [s, bias].
pub fn logistic_feature_dgp(n: usize, weight: Scalar, seed: u64) -> (Vec<Vec<Scalar>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    for _ in 0..n {
        let s: Scalar = rng.random_range(-2.0..2.0);
        let p = sigmoid(weight * s);
        features.push(vec![s, 1.0]);
        outcomes.push(rng.random_bool(p));
    }
    (features, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{estimate_sigma, label_event};

    fn small_config() -> SynthConfig {
        SynthConfig {
            n_entities: 4,
            n_months: 60,
            seed: 7,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small_config()).unwrap();
        let b = generate(&small_config()).unwrap();
        assert_eq!(a.indexes, b.indexes);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.oracle, b.oracle);

        let mut shifted = small_config();
        shifted.seed = 8;
        let c = generate(&shifted).unwrap();
        assert_ne!(a.indexes, c.indexes);
    }

    #[test]
    fn labels_through_the_real_path_match_generator_flags() {
        let output = generate(&small_config()).unwrap();
        let boundary = MonthStamp::new(2023, 6).unwrap();
        assert!(boundary >= output.question_start);

        for series in &output.indexes {
            let sigma = estimate_sigma(series, boundary).unwrap().sigma;
            let rows: Vec<&OracleRow> = output
                .oracle
                .iter()
                .filter(|r| &r.entity == series.entity())
                .collect();
            assert!(!rows.is_empty());
            for row in rows {
                let Some(expected) = row.event else { continue };
                let i_t = series.value(row.t).unwrap();
                let i_t1 = series.value(row.t.successor()).unwrap();
                assert_eq!(
                    label_event(i_t, i_t1, sigma).unwrap(),
                    expected,
                    "entity {} month {}",
                    row.entity,
                    row.t
                );
            }
        }
    }

    #[test]
    fn signal_articles_align_with_oracle() {
        let output = generate(&small_config()).unwrap();
        for row in &output.oracle {
            let has_article = output.corpus.iter().any(|a| {
                a.entities.contains(&row.entity)
                    && a.published >= row.t.first_day()
                    && a.published <= row.t.last_day()
            });
            assert_eq!(has_article, row.signal, "{} at {}", row.entity, row.t);
        }
        let keyword = signal_keyword();
        for article in &output.corpus {
            assert!(article.text.contains(&keyword));
        }
    }

    #[test]
    fn empirical_conditionals_converge_to_targets() {
        // ~50k honest entity-months
        let config = SynthConfig {
            n_entities: 500,
            n_months: WARMUP_MONTHS + 101,
            signal_rate: 0.2,
            shock_probability_given_signal: 0.6,
            shock_probability_no_signal: 0.05,
            seed: 42,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();

        let mut with_signal = (0usize, 0usize);
        let mut without = (0usize, 0usize);
        for row in &output.oracle {
            let Some(event) = row.event else { continue };
            let slot = if row.signal {
                &mut with_signal
            } else {
                &mut without
            };
            slot.0 += usize::from(event);
            slot.1 += 1;
        }
        assert!(with_signal.1 + without.1 >= 50_000);

        let p_signal = with_signal.0 as Scalar / with_signal.1 as Scalar;
        let p_none = without.0 as Scalar / without.1 as Scalar;
        assert!(
            (p_signal - 0.6).abs() < 0.02,
            "P(event|signal) = {p_signal}"
        );
        assert!((p_none - 0.05).abs() < 0.02, "P(event|none) = {p_none}");

        let signal_frac = output.oracle.iter().filter(|r| r.signal).count() as Scalar
            / output.oracle.len() as Scalar;
        assert!((signal_frac - 0.2).abs() < 0.02);
    }

    #[test]
    fn signal_independent_case_matches_overall_rate() {
        let q = 0.12;
        let config = SynthConfig {
            n_entities: 200,
            n_months: WARMUP_MONTHS + 80,
            shock_probability_given_signal: q,
            shock_probability_no_signal: q,
            seed: 5,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let resolved: Vec<bool> = output.oracle.iter().filter_map(|r| r.event).collect();
        let rate = resolved.iter().filter(|&&e| e).count() as Scalar / resolved.len() as Scalar;
        assert!((rate - q).abs() < 0.01, "rate {rate} vs q {q}");
    }

    #[test]
    fn infeasible_magnitude_is_rejected() {
        let config = SynthConfig {
            shock_magnitude_mean: 0.3,
            base_volatility: 0.1,
            ..SynthConfig::default()
        };
        assert!(matches!(
            generate(&config),
            Err(SynthError::InfeasibleConfig(_))
        ));

        let bad_order = SynthConfig {
            shock_probability_given_signal: 0.1,
            shock_probability_no_signal: 0.5,
            ..SynthConfig::default()
        };
        assert!(generate(&bad_order).is_err());
    }

    #[test]
    fn bayes_forecaster_is_unbeatable_on_brier() {
        let config = SynthConfig {
            n_entities: 100,
            n_months: WARMUP_MONTHS + 60,
            seed: 13,
            ..SynthConfig::default()
        };
        let output = generate(&config).unwrap();
        let resolved: Vec<(&OracleRow, bool)> = output
            .oracle
            .iter()
            .filter_map(|r| r.event.map(|e| (r, e)))
            .collect();

        let bayes: Vec<Scalar> = resolved.iter().map(|(r, _)| r.p_true).collect();
        let outcomes: Vec<bool> = resolved.iter().map(|(_, e)| *e).collect();
        let bayes_brier = crate::metrics::brier(&bayes, &outcomes).unwrap();

        let rate = outcomes.iter().filter(|&&e| e).count() as Scalar / outcomes.len() as Scalar;
        let constant: Vec<Scalar> = vec![rate; outcomes.len()];
        let constant_brier = crate::metrics::brier(&constant, &outcomes).unwrap();

        // sampling tolerance: at n ~ 5k the oracle's Brier estimate has
        // standard error well under 0.01
        assert!(
            constant_brier >= bayes_brier - 0.01,
            "constant {constant_brier} vs bayes {bayes_brier}"
        );
    }

    #[test]
    fn oracle_csv_has_header_and_rows() {
        let output = generate(&small_config()).unwrap();
        let mut buf = Vec::new();
        write_oracle_csv(&mut buf, &output.oracle).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("entity_kind,entity_name,year,month,signal,p_true,event\n"));
        assert_eq!(text.lines().count(), output.oracle.len() + 1);
    }

    #[test]
    fn calibrated_pairs_are_calibrated() {
        let pairs = calibrated_pairs(20_000, 3);
        let (preds, outcomes): (Vec<Prob>, Vec<bool>) = pairs.into_iter().unzip();
        let e = crate::metrics::ece(&preds, &outcomes, 10).unwrap();
        assert!(e < 0.02, "ece {e}");
    }

    #[test]
    fn logistic_dgp_rate_matches_link() {
        let (features, outcomes) = logistic_feature_dgp(20_000, 2.0, 9);
        // empirical positive rate among strongly positive scores
        let strong: Vec<bool> = features
            .iter()
            .zip(&outcomes)
            .filter(|(x, _)| x[0] > 1.5)
            .map(|(_, &y)| y)
            .collect();
        let rate = strong.iter().filter(|&&y| y).count() as Scalar / strong.len() as Scalar;
        let expected = sigmoid(2.0 * 1.75); // midpoint of the band
        assert!((rate - expected).abs() < 0.03, "rate {rate} vs {expected}");
    }
}
