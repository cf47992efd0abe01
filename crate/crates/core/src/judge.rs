//! Automated rubric evaluator for reasoning traces.
//!
//! Six binary behaviors are annotated per trace: base-rate anchoring,
//! statistical modeling, an explicit forecasting model, evidence-to-outcome
//! linkage, probabilistic synthesis, and uncertainty refinement. The judge
//! prompt requests structured JSON with exactly those keys; parsing is
//! strict on key names but tolerates booleans in place of 0/1, since judge
//! models drift on output formats. Judge endpoints must decode
//! deterministically (temperature 0).

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::forecast::EndpointConfig;
use crate::Scalar;

/// Judge prompt shipped with the crate; `{trace}` is replaced verbatim.
pub const JUDGE_TEMPLATE: &str = include_str!("../templates/judge_prompt.txt");

/// The six behavior keys, in canonical order.
pub const BEHAVIOR_KEYS: [&str; 6] = [
    "base_rate",
    "statistical_model",
    "explicit_forecasting_model",
    "evidence_linkage",
    "probabilistic_synthesis",
    "uncertainty_refinement",
];

#[derive(Debug, thiserror::Error)]
pub enum JudgeError {
    #[error("reasoning trace is empty")]
    EmptyTrace,
    #[error("no JSON object with all six behavior keys found; missing: {}", missing.join(", "))]
    MissingKeys { missing: Vec<String> },
    #[error("behavior {key} has non-binary value {value}")]
    NonBinaryValue { key: String, value: String },
    #[error("no annotations to aggregate")]
    EmptyAnnotations,
    #[error("judge endpoint must use temperature 0 for deterministic decoding, got {0}")]
    NonZeroTemperature(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Binary flags for the six reasoning behaviors of one trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricAnnotation {
    pub base_rate: u8,
    pub statistical_model: u8,
    pub explicit_forecasting_model: u8,
    pub evidence_linkage: u8,
    pub probabilistic_synthesis: u8,
    pub uncertainty_refinement: u8,
}

impl RubricAnnotation {
    pub fn zeros() -> Self {
        RubricAnnotation {
            base_rate: 0,
            statistical_model: 0,
            explicit_forecasting_model: 0,
            evidence_linkage: 0,
            probabilistic_synthesis: 0,
            uncertainty_refinement: 0,
        }
    }

    pub fn flags(&self) -> [u8; 6] {
        [
            self.base_rate,
            self.statistical_model,
            self.explicit_forecasting_model,
            self.evidence_linkage,
            self.probabilistic_synthesis,
            self.uncertainty_refinement,
        ]
    }

    /// Sum of the six flags, 0..=6.
    pub fn total(&self) -> u8 {
        self.flags().iter().sum()
    }
}

/// Per-behavior frequencies and the mean total score over a trace set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RubricSummary {
    pub n_traces: usize,
    pub base_rate: Scalar,
    pub statistical_model: Scalar,
    pub explicit_forecasting_model: Scalar,
    pub evidence_linkage: Scalar,
    pub probabilistic_synthesis: Scalar,
    pub uncertainty_refinement: Scalar,
    pub mean_total_score: Scalar,
}

impl RubricSummary {
    pub fn frequencies(&self) -> [Scalar; 6] {
        [
            self.base_rate,
            self.statistical_model,
            self.explicit_forecasting_model,
            self.evidence_linkage,
            self.probabilistic_synthesis,
            self.uncertainty_refinement,
        ]
    }
}

/// Renders the judge prompt for one trace. The trace is inserted without
/// any escaping, so braces in the reasoning cannot corrupt the
/// output-format block.
pub fn render_judge_prompt(reasoning_trace: &str) -> Result<String, JudgeError> {
    if reasoning_trace.trim().is_empty() {
        return Err(JudgeError::EmptyTrace);
    }
    Ok(JUDGE_TEMPLATE.replacen("{trace}", reasoning_trace, 1))
}

/// Asserts the deterministic-decoding contract before any judge dispatch.
pub fn assert_judge_config(config: &EndpointConfig) -> Result<(), JudgeError> {
    if config.temperature != 0.0 {
        return Err(JudgeError::NonZeroTemperature(config.temperature));
    }
    Ok(())
}

/// Extracts the first well-formed JSON object containing all six behavior
/// keys with binary (or boolean) values. Surrounding prose is tolerated.
pub fn parse_judge_json(text: &str) -> Result<RubricAnnotation, JudgeError> {
    let mut best_missing: Option<Vec<String>> = None;

    for candidate in json_object_candidates(text) {
        let Ok(value) = serde_json::from_str::<serde_json::Value>(candidate) else {
            continue;
        };
        let Some(object) = value.as_object() else {
            continue;
        };
        let missing: Vec<String> = BEHAVIOR_KEYS
            .iter()
            .filter(|k| !object.contains_key(**k))
            .map(|k| k.to_string())
            .collect();
        if !missing.is_empty() {
            let relevant = missing.len() < BEHAVIOR_KEYS.len();
            if relevant
                && best_missing
                    .as_ref()
                    .map(|prev| missing.len() < prev.len())
                    .unwrap_or(true)
            {
                best_missing = Some(missing);
            }
            continue;
        }

        let mut flags = [0u8; 6];
        for (slot, key) in flags.iter_mut().zip(BEHAVIOR_KEYS) {
            *slot = binary_value(&object[key]).ok_or_else(|| JudgeError::NonBinaryValue {
                key: key.to_string(),
                value: object[key].to_string(),
            })?;
        }
        let [base_rate, statistical_model, explicit_forecasting_model, evidence_linkage, probabilistic_synthesis, uncertainty_refinement] =
            flags;
        return Ok(RubricAnnotation {
            base_rate,
            statistical_model,
            explicit_forecasting_model,
            evidence_linkage,
            probabilistic_synthesis,
            uncertainty_refinement,
        });
    }

    Err(JudgeError::MissingKeys {
        missing: best_missing
            .unwrap_or_else(|| BEHAVIOR_KEYS.iter().map(|k| k.to_string()).collect()),
    })
}

/// Balanced-brace substrings starting at each `{`, string-literal aware.
fn json_object_candidates(text: &str) -> impl Iterator<Item = &str> {
    text.char_indices()
        .filter(|(_, c)| *c == '{')
        .filter_map(|(start, _)| {
            let mut depth = 0usize;
            let mut in_string = false;
            let mut escaped = false;
            for (offset, c) in text[start..].char_indices() {
                if in_string {
                    match c {
                        _ if escaped => escaped = false,
                        '\\' => escaped = true,
                        '"' => in_string = false,
                        _ => {}
                    }
                    continue;
                }
                match c {
                    '"' => in_string = true,
                    '{' => depth += 1,
                    '}' => {
                        depth -= 1;
                        if depth == 0 {
                            return Some(&text[start..start + offset + c.len_utf8()]);
                        }
                    }
                    _ => {}
                }
            }
            None
        })
}

fn binary_value(value: &serde_json::Value) -> Option<u8> {
    match value {
        serde_json::Value::Number(n) => match n.as_u64() {
            Some(0) => Some(0),
            Some(1) => Some(1),
            _ => None,
        },
        serde_json::Value::Bool(b) => Some(u8::from(*b)),
        _ => None,
    }
}

/// Per-behavior means and the mean total score.
pub fn aggregate_rubric(annotations: &[RubricAnnotation]) -> Result<RubricSummary, JudgeError> {
    if annotations.is_empty() {
        return Err(JudgeError::EmptyAnnotations);
    }
    let n = annotations.len() as Scalar;
    let mut sums = [0usize; 6];
    let mut total = 0usize;
    for annotation in annotations {
        for (sum, flag) in sums.iter_mut().zip(annotation.flags()) {
            *sum += flag as usize;
        }
        total += annotation.total() as usize;
    }
    let freq = |i: usize| sums[i] as Scalar / n;
    Ok(RubricSummary {
        n_traces: annotations.len(),
        base_rate: freq(0),
        statistical_model: freq(1),
        explicit_forecasting_model: freq(2),
        evidence_linkage: freq(3),
        probabilistic_synthesis: freq(4),
        uncertainty_refinement: freq(5),
        mean_total_score: total as Scalar / n,
    })
}

/// One persisted annotation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: String,
    pub backend: String,
    #[serde(flatten)]
    pub annotation: RubricAnnotation,
}

/// Writes annotations as JSONL.
pub fn write_annotations_jsonl<W: Write>(
    mut writer: W,
    records: &[AnnotationRecord],
) -> Result<(), JudgeError> {
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads annotations from JSONL.
pub fn read_annotations_jsonl<R: BufRead>(reader: R) -> Result<Vec<AnnotationRecord>, JudgeError> {
    let mut records = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}
