//! Disruption-index time series: entities, month arithmetic, per-entity
//! change volatility, and binary event resolution.
//!
//! An event at month t+1 is a month-over-month index increase at least as
//! large as the entity's historical change volatility:
//!
//! ```text
//! y = 1  iff  I(t+1) - I(t) >= sigma
//! ```
//!
//! where sigma is the population standard deviation of one-month changes,
//! estimated only from observations at or before a cutoff month.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::num::population_std;
use crate::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("entity name empty after normalization: {0:?}")]
    EmptyEntityName(String),
    #[error("unknown entity kind: {0:?}")]
    UnknownEntityKind(String),
    #[error("month out of range 1..=12: {0}")]
    MonthOutOfRange(u32),
    #[error("malformed month stamp (expected YYYY-MM): {0:?}")]
    MalformedMonthStamp(String),
    #[error("duplicate month {month} in series for {entity}")]
    DuplicateMonth { entity: EntityId, month: MonthStamp },
    #[error("missing observation for {entity} at {month}")]
    MissingMonth { entity: EntityId, month: MonthStamp },
    #[error("insufficient history for {entity}: {n_changes} monthly changes at or before {cutoff} (need at least 2)")]
    InsufficientHistory {
        entity: EntityId,
        cutoff: MonthStamp,
        n_changes: usize,
    },
    #[error("degenerate threshold: sigma = {sigma} must be positive")]
    DegenerateThreshold { sigma: Scalar },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Whether an entity is a country or a product category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Country,
    Product,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKind::Country => write!(f, "country"),
            EntityKind::Product => write!(f, "product"),
        }
    }
}

impl FromStr for EntityKind {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "country" => Ok(EntityKind::Country),
            "product" => Ok(EntityKind::Product),
            other => Err(IndexError::UnknownEntityKind(other.to_string())),
        }
    }
}

/// A forecastable entity: a country or product with a normalized name token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "EntityIdRaw", into = "EntityIdRaw")]
pub struct EntityId {
    kind: EntityKind,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct EntityIdRaw {
    kind: EntityKind,
    name: String,
}

impl TryFrom<EntityIdRaw> for EntityId {
    type Error = IndexError;

    fn try_from(raw: EntityIdRaw) -> Result<Self, Self::Error> {
        EntityId::new(raw.kind, &raw.name)
    }
}

impl From<EntityId> for EntityIdRaw {
    fn from(id: EntityId) -> Self {
        EntityIdRaw {
            kind: id.kind,
            name: id.name,
        }
    }
}

impl EntityId {
    /// Builds an entity id, normalizing the name to a lowercase token:
    /// runs of non-alphanumeric characters become single underscores.
    /// Normalization is idempotent.
    pub fn new(kind: EntityKind, name: &str) -> Result<Self, IndexError> {
        let normalized = normalize_name(name);
        if normalized.is_empty() {
            return Err(IndexError::EmptyEntityName(name.to_string()));
        }
        Ok(EntityId {
            kind,
            name: normalized,
        })
    }

    pub fn country(name: &str) -> Result<Self, IndexError> {
        Self::new(EntityKind::Country, name)
    }

    pub fn product(name: &str) -> Result<Self, IndexError> {
        Self::new(EntityKind::Product, name)
    }

    pub fn kind(&self) -> EntityKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_sep = false;
    for c in raw.trim().chars() {
        if c.is_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            for lc in c.to_lowercase() {
                out.push(lc);
            }
        } else {
            pending_sep = true;
        }
    }
    out
}

// Entities sort by name first so dataset output groups alphabetically.
impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.name
            .cmp(&other.name)
            .then_with(|| self.kind.cmp(&other.kind))
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.name)
    }
}

/// A calendar month, totally ordered, with well-defined successors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthStamp {
    year: i32,
    month: u32,
}

impl MonthStamp {
    pub fn new(year: i32, month: u32) -> Result<Self, IndexError> {
        if !(1..=12).contains(&month) {
            return Err(IndexError::MonthOutOfRange(month));
        }
        Ok(MonthStamp { year, month })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn month(&self) -> u32 {
        self.month
    }

    pub fn successor(&self) -> MonthStamp {
        if self.month == 12 {
            MonthStamp {
                year: self.year + 1,
                month: 1,
            }
        } else {
            MonthStamp {
                year: self.year,
                month: self.month + 1,
            }
        }
    }

    pub fn predecessor(&self) -> MonthStamp {
        if self.month == 1 {
            MonthStamp {
                year: self.year - 1,
                month: 12,
            }
        } else {
            MonthStamp {
                year: self.year,
                month: self.month - 1,
            }
        }
    }

    /// Last calendar day of the month; the information-state boundary for
    /// a question framed "as of" this month.
    pub fn last_day(&self) -> NaiveDate {
        let next = self.successor();
        NaiveDate::from_ymd_opt(next.year, next.month, 1)
            .expect("valid first-of-month date")
            .pred_opt()
            .expect("month start has a predecessor day")
    }

    pub fn first_day(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid first-of-month date")
    }

    /// English month name plus year, e.g. "October 2025".
    pub fn long_name(&self) -> String {
        const NAMES: [&str; 12] = [
            "January",
            "February",
            "March",
            "April",
            "May",
            "June",
            "July",
            "August",
            "September",
            "October",
            "November",
            "December",
        ];
        format!("{} {}", NAMES[(self.month - 1) as usize], self.year)
    }
}

impl fmt::Display for MonthStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for MonthStamp {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| IndexError::MalformedMonthStamp(s.to_string()))?;
        let year: i32 = y
            .parse()
            .map_err(|_| IndexError::MalformedMonthStamp(s.to_string()))?;
        let month: u32 = m
            .parse()
            .map_err(|_| IndexError::MalformedMonthStamp(s.to_string()))?;
        MonthStamp::new(year, month)
    }
}

impl Serialize for MonthStamp {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MonthStamp {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Monthly disruption-index observations for one entity.
///
/// Months are strictly increasing with no duplicates; gaps are allowed but
/// surfaced via [`IndexSeries::has_gaps`].
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    entity: EntityId,
    observations: Vec<(MonthStamp, Scalar)>,
}

impl IndexSeries {
    /// Builds a series, sorting observations by month. Rejects duplicates.
    pub fn new(
        entity: EntityId,
        mut observations: Vec<(MonthStamp, Scalar)>,
    ) -> Result<Self, IndexError> {
        observations.sort_by_key(|(m, _)| *m);
        for pair in observations.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(IndexError::DuplicateMonth {
                    entity,
                    month: pair[0].0,
                });
            }
        }
        Ok(IndexSeries {
            entity,
            observations,
        })
    }

    pub fn entity(&self) -> &EntityId {
        &self.entity
    }

    pub fn observations(&self) -> &[(MonthStamp, Scalar)] {
        &self.observations
    }

    pub fn value(&self, t: MonthStamp) -> Option<Scalar> {
        self.observations
            .binary_search_by_key(&t, |(m, _)| *m)
            .ok()
            .map(|i| self.observations[i].1)
    }

    pub fn first_month(&self) -> Option<MonthStamp> {
        self.observations.first().map(|(m, _)| *m)
    }

    pub fn last_month(&self) -> Option<MonthStamp> {
        self.observations.last().map(|(m, _)| *m)
    }

    /// True when at least one month between first and last is unobserved.
    pub fn has_gaps(&self) -> bool {
        self.observations
            .windows(2)
            .any(|pair| pair[0].0.successor() != pair[1].0)
    }

    /// Consecutive-month changes (t, I(t) - I(t-1)), skipping gaps.
    pub fn monthly_changes(&self) -> impl Iterator<Item = (MonthStamp, Scalar)> + '_ {
        self.observations.windows(2).filter_map(|pair| {
            let (prev_m, prev_v) = pair[0];
            let (cur_m, cur_v) = pair[1];
            (prev_m.successor() == cur_m).then_some((cur_m, cur_v - prev_v))
        })
    }
}

/// Per-entity volatility of monthly changes, estimated on a bounded history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub entity: EntityId,
    pub sigma: Scalar,
    pub n_changes: usize,
    /// Month of the last change that entered the estimate.
    pub estimation_end: MonthStamp,
}

/// Month-over-month change I(t) - I(t-1).
///
/// Fails with `MissingMonth` when either observation is absent, which
/// callers treat as "skip this question".
pub fn monthly_change(series: &IndexSeries, t: MonthStamp) -> Result<Scalar, IndexError> {
    let cur = series.value(t).ok_or_else(|| IndexError::MissingMonth {
        entity: series.entity().clone(),
        month: t,
    })?;
    let prev_month = t.predecessor();
    let prev = series
        .value(prev_month)
        .ok_or_else(|| IndexError::MissingMonth {
            entity: series.entity().clone(),
            month: prev_month,
        })?;
    Ok(cur - prev)
}

/// Population standard deviation of monthly changes at or before `cutoff`.
///
/// Changes spanning a gap are excluded. Never reads observations after the
/// cutoff, so the estimate is safe to reuse on test months.
pub fn estimate_sigma(
    series: &IndexSeries,
    cutoff: MonthStamp,
) -> Result<SigmaEstimate, IndexError> {
    let changes: Vec<(MonthStamp, Scalar)> = series
        .monthly_changes()
        .filter(|(m, _)| *m <= cutoff)
        .collect();
    if changes.len() < 2 {
        return Err(IndexError::InsufficientHistory {
            entity: series.entity().clone(),
            cutoff,
            n_changes: changes.len(),
        });
    }
    let values: Vec<Scalar> = changes.iter().map(|(_, d)| *d).collect();
    Ok(SigmaEstimate {
        entity: series.entity().clone(),
        sigma: population_std(&values),
        n_changes: values.len(),
        estimation_end: changes.last().expect("non-empty").0,
    })
}

/// Resolves the binary disruption event: 1 iff the next-month increase
/// reaches the threshold (non-strict by default).
pub fn label_event(i_t: Scalar, i_t1: Scalar, sigma: Scalar) -> Result<bool, IndexError> {
    label_event_with(i_t, i_t1, sigma, false)
}

/// As [`label_event`], with a strict-inequality variant behind a flag.
pub fn label_event_with(
    i_t: Scalar,
    i_t1: Scalar,
    sigma: Scalar,
    strict: bool,
) -> Result<bool, IndexError> {
    if sigma <= 0.0 {
        return Err(IndexError::DegenerateThreshold { sigma });
    }
    let delta = i_t1 - i_t;
    Ok(if strict {
        delta > sigma
    } else {
        delta >= sigma
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexCsvRow {
    entity_kind: String,
    entity_name: String,
    year: i32,
    month: u32,
    value: Scalar,
}

/// Reads the index CSV (`entity_kind,entity_name,year,month,value`) into
/// per-entity series, ordered by entity.
pub fn read_index_csv<R: Read>(reader: R) -> Result<Vec<IndexSeries>, IndexError> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<EntityId, Vec<(MonthStamp, Scalar)>> = BTreeMap::new();
    for record in csv_reader.deserialize() {
        let row: IndexCsvRow = record?;
        let entity = EntityId::new(row.entity_kind.parse::<EntityKind>()?, &row.entity_name)?;
        let month = MonthStamp::new(row.year, row.month)?;
        grouped.entry(entity).or_default().push((month, row.value));
    }
    grouped
        .into_iter()
        .map(|(entity, obs)| IndexSeries::new(entity, obs))
        .collect()
}

/// Writes series back to the index CSV format, ordered by entity then month.
pub fn write_index_csv<W: std::io::Write>(
    writer: W,
    series: &[IndexSeries],
) -> Result<(), IndexError> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    let mut sorted: Vec<&IndexSeries> = series.iter().collect();
    sorted.sort_by(|a, b| a.entity().cmp(b.entity()));
    for s in sorted {
        for (month, value) in s.observations() {
            csv_writer.serialize(IndexCsvRow {
                entity_kind: s.entity().kind().to_string(),
                entity_name: s.entity().name().to_string(),
                year: month.year(),
                month: month.month(),
                value: *value,
            })?;
        }
    }
    csv_writer.flush().map_err(csv::Error::from)?;
    Ok(())
}
