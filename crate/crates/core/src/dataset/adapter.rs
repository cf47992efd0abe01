//! Ingestion adapter for externally published question sets.
//!
//! External datasets ship with their own column names; the adapter maps
//! those onto [`ForecastingQuestion`] fields through a declarative config,
//! so no schema is hard-coded here.

use std::io::{BufRead, Read};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DatasetError, ForecastingQuestion, NewsArticle, Split};
use crate::index::{EntityId, EntityKind, MonthStamp};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterFormat {
    Csv,
    Jsonl,
}

/// Column mapping for an external question file.
///
/// Exactly one of `month` (a `YYYY-MM` column) or `year` + `month_number`
/// must be given. Entity kind comes from the `entity_kind` column when
/// present, else from `fixed_entity_kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub format: AdapterFormat,
    pub entity_name: String,
    #[serde(default)]
    pub entity_kind: Option<String>,
    #[serde(default)]
    pub fixed_entity_kind: Option<EntityKind>,
    #[serde(default)]
    pub month: Option<String>,
    #[serde(default)]
    pub year: Option<String>,
    #[serde(default)]
    pub month_number: Option<String>,
    pub current_index: String,
    #[serde(default)]
    pub prior_change: Option<String>,
    pub sigma: String,
    #[serde(default)]
    pub label: Option<String>,
    /// Column with pre-joined context text; becomes a single synthetic
    /// article dated at the end of month t.
    #[serde(default)]
    pub context_text: Option<String>,
    /// Split assigned to rows with a label; unlabeled rows are unresolved.
    #[serde(default = "default_split")]
    pub labeled_split: Split,
}

fn default_split() -> Split {
    Split::Test
}

enum RowView<'a> {
    Csv {
        headers: &'a csv::StringRecord,
        record: &'a csv::StringRecord,
    },
    Json(&'a Value),
}

impl RowView<'_> {
    fn raw(&self, column: &str) -> Option<String> {
        match self {
            RowView::Csv { headers, record } => headers
                .iter()
                .position(|h| h == column)
                .and_then(|i| record.get(i))
                .map(str::to_string),
            RowView::Json(value) => value.get(column).map(|v| match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            }),
        }
    }

    fn required(&self, column: &str, row: usize) -> Result<String, DatasetError> {
        self.raw(column)
            .ok_or_else(|| DatasetError::Adapter(format!("row {row}: missing column {column:?}")))
    }

    fn number(&self, column: &str, row: usize) -> Result<Scalar, DatasetError> {
        let text = self.required(column, row)?;
        text.trim().parse::<Scalar>().map_err(|_| {
            DatasetError::Adapter(format!(
                "row {row}: column {column:?} is not a number: {text:?}"
            ))
        })
    }
}

fn adapt_row(
    view: &RowView<'_>,
    cfg: &AdapterConfig,
    row: usize,
) -> Result<ForecastingQuestion, DatasetError> {
    let kind = match (&cfg.entity_kind, cfg.fixed_entity_kind) {
        (Some(col), _) => view
            .required(col, row)?
            .parse::<EntityKind>()
            .map_err(|e| DatasetError::Adapter(format!("row {row}: {e}")))?,
        (None, Some(fixed)) => fixed,
        (None, None) => {
            return Err(DatasetError::Adapter(
                "adapter config needs entity_kind or fixed_entity_kind".into(),
            ))
        }
    };
    let name = view.required(&cfg.entity_name, row)?;
    let entity =
        EntityId::new(kind, &name).map_err(|e| DatasetError::Adapter(format!("row {row}: {e}")))?;

    let t: MonthStamp = match (&cfg.month, &cfg.year, &cfg.month_number) {
        (Some(col), _, _) => view
            .required(col, row)?
            .parse()
            .map_err(|e| DatasetError::Adapter(format!("row {row}: {e}")))?,
        (None, Some(ycol), Some(mcol)) => {
            let year = view.number(ycol, row)? as i32;
            let month = view.number(mcol, row)? as u32;
            MonthStamp::new(year, month)
                .map_err(|e| DatasetError::Adapter(format!("row {row}: {e}")))?
        }
        _ => {
            return Err(DatasetError::Adapter(
                "adapter config needs month or year + month_number".into(),
            ))
        }
    };

    let current_index = view.number(&cfg.current_index, row)?;
    let prior_change = match &cfg.prior_change {
        Some(col) => view.number(col, row)?,
        None => 0.0,
    };
    let sigma = view.number(&cfg.sigma, row)?;
    if sigma <= 0.0 {
        return Err(DatasetError::Adapter(format!(
            "row {row}: sigma must be positive, got {sigma}"
        )));
    }

    let label = match &cfg.label {
        Some(col) => match view.raw(col).map(|s| s.trim().to_string()) {
            None => None,
            Some(s) if s.is_empty() || s == "null" => None,
            Some(s) => match s.as_str() {
                "0" | "false" => Some(false),
                "1" | "true" => Some(true),
                other => {
                    return Err(DatasetError::Adapter(format!(
                        "row {row}: label must be 0/1/true/false/null, got {other:?}"
                    )))
                }
            },
        },
        None => None,
    };

    let id = ForecastingQuestion::make_id(&entity, t);
    let news = match &cfg.context_text {
        Some(col) => match view.raw(col) {
            Some(text) if !text.trim().is_empty() => vec![NewsArticle {
                id: format!("{id}:context"),
                published: t.last_day(),
                title: String::new(),
                text,
                entities: vec![entity.clone()],
            }],
            _ => Vec::new(),
        },
        None => Vec::new(),
    };

    Ok(ForecastingQuestion {
        id,
        entity,
        t,
        current_index,
        prior_change,
        sigma,
        news,
        split: if label.is_some() {
            cfg.labeled_split
        } else {
            Split::Unresolved
        },
        label,
    })
}

/// Loads an external question file through the column mapping.
pub fn load_adapted_questions<R: Read + BufRead>(
    reader: R,
    cfg: &AdapterConfig,
) -> Result<Vec<ForecastingQuestion>, DatasetError> {
    let mut questions = Vec::new();
    match cfg.format {
        AdapterFormat::Csv => {
            let mut csv_reader = csv::Reader::from_reader(reader);
            let headers = csv_reader
                .headers()
                .map_err(|e| DatasetError::Adapter(format!("cannot read csv header: {e}")))?
                .clone();
            for (i, record) in csv_reader.records().enumerate() {
                let record =
                    record.map_err(|e| DatasetError::Adapter(format!("row {}: {e}", i + 1)))?;
                let view = RowView::Csv {
                    headers: &headers,
                    record: &record,
                };
                questions.push(adapt_row(&view, cfg, i + 1)?);
            }
        }
        AdapterFormat::Jsonl => {
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value = serde_json::from_str(&line)
                    .map_err(|e| DatasetError::Adapter(format!("row {}: {e}", i + 1)))?;
                questions.push(adapt_row(&RowView::Json(&value), cfg, i + 1)?);
            }
        }
    }
    questions.sort_by(|a, b| a.entity.cmp(&b.entity).then_with(|| a.t.cmp(&b.t)));
    Ok(questions)
}
