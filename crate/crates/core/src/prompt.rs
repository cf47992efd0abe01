//! Prompt rendering and probabilistic answer extraction.
//!
//! Prompts are built from a plain-text template with named placeholders
//! (`{entity}`, `{month}`, `{index}`, `{delta}`, `{sigma}`, `{context}`,
//! `{next_month}`) so the wording can be edited without rebuilding. Model
//! output is expected to end with `<answer>p</answer>`; the last well-formed
//! tag wins, since reasoning traces may contain intermediate drafts.

use serde::{Deserialize, Serialize};

use crate::dataset::ForecastingQuestion;
use crate::{Prob, Scalar};

/// Template shipped with the crate; mirrors the standard prompt structure.
pub const DEFAULT_TEMPLATE: &str = include_str!("../templates/forecast_prompt.txt");

const PLACEHOLDERS: [&str; 7] = [
    "{entity}",
    "{month}",
    "{index}",
    "{delta}",
    "{sigma}",
    "{context}",
    "{next_month}",
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("no <answer>...</answer> tag found in model output")]
    NoAnswerTag,
    #[error("answer tag does not contain a plain decimal number: {0:?}")]
    MalformedNumber(String),
    #[error("answer probability {0} outside [0, 1]")]
    OutOfRange(Scalar),
    #[error("template is missing placeholder {0:?}")]
    MissingPlaceholder(&'static str),
}

/// A fully rendered forecasting prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub question_id: String,
    pub text: String,
    pub char_count: usize,
}

/// Probability extracted from model output plus the text that preceded it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub probability: Prob,
    pub raw_span: String,
    pub reasoning: String,
}

/// Renders a question through the default template.
pub fn render_prompt(question: &ForecastingQuestion) -> RenderedPrompt {
    render_prompt_with(question, DEFAULT_TEMPLATE).expect("default template has all placeholders")
}

/// Renders a question through a caller-supplied template.
pub fn render_prompt_with(
    question: &ForecastingQuestion,
    template: &str,
) -> Result<RenderedPrompt, PromptError> {
    for placeholder in PLACEHOLDERS {
        if !template.contains(placeholder) {
            return Err(PromptError::MissingPlaceholder(placeholder));
        }
    }
    let text = template
        .replace("{entity}", question.entity.name())
        .replace("{month}", &question.t.long_name())
        .replace("{next_month}", &question.t.successor().long_name())
        .replace("{index}", &format!("{:.2}", question.current_index))
        .replace("{delta}", &delta_phrase(question.prior_change))
        .replace("{sigma}", &format!("{:.2}", question.sigma))
        .replace("{context}", &context_block(question));
    Ok(RenderedPrompt {
        question_id: question.id.clone(),
        char_count: text.chars().count(),
        text,
    })
}

fn delta_phrase(delta: Scalar) -> String {
    if delta > 0.0 {
        format!("increased by {:.2}", delta)
    } else if delta < 0.0 {
        format!("decreased by {:.2}", -delta)
    } else {
        "remained unchanged".to_string()
    }
}

fn context_block(question: &ForecastingQuestion) -> String {
    if question.news.is_empty() {
        return "No recent articles available.".to_string();
    }
    question
        .news
        .iter()
        .map(|a| {
            if a.title.is_empty() {
                format!("[{}] {}", a.published, a.text.trim())
            } else {
                format!("[{}] {}: {}", a.published, a.title.trim(), a.text.trim())
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Extracts the probability from the last well-formed
/// `<answer>...</answer>` span. Whitespace inside the tag is tolerated;
/// percent signs and scientific notation are not.
pub fn parse_answer(model_output: &str) -> Result<ParsedAnswer, PromptError> {
    const OPEN: &str = "<answer>";
    const CLOSE: &str = "</answer>";

    // Walk open tags from the end; an unclosed trailing tag must not hide
    // an earlier complete answer.
    let mut search_end = model_output.len();
    loop {
        let Some(open_at) = model_output[..search_end].rfind(OPEN) else {
            return Err(PromptError::NoAnswerTag);
        };
        let content_start = open_at + OPEN.len();
        if let Some(close_rel) = model_output[content_start..].find(CLOSE) {
            let raw = &model_output[content_start..content_start + close_rel];
            let probability = parse_probability(raw)?;
            return Ok(ParsedAnswer {
                probability,
                raw_span: raw.to_string(),
                reasoning: model_output[..open_at].to_string(),
            });
        }
        search_end = open_at;
    }
}

fn parse_probability(raw: &str) -> Result<Prob, PromptError> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(PromptError::MalformedNumber(raw.to_string()));
    }
    let body = trimmed.strip_prefix(['+', '-']).unwrap_or(trimmed);
    let plain_decimal = !body.is_empty()
        && body.chars().all(|c| c.is_ascii_digit() || c == '.')
        && body.chars().filter(|&c| c == '.').count() <= 1
        && body.chars().any(|c| c.is_ascii_digit());
    if !plain_decimal {
        return Err(PromptError::MalformedNumber(raw.to_string()));
    }
    let value: Scalar = trimmed
        .parse()
        .map_err(|_| PromptError::MalformedNumber(raw.to_string()))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(PromptError::OutOfRange(value));
    }
    Ok(value)
}
