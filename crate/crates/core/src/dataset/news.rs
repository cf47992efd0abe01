//! Timestamped news articles and the JSONL corpus format.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::index::EntityId;

/// A timestamped article tagged with the entities it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewsArticle {
    pub id: String,
    pub published: NaiveDate,
    pub title: String,
    /// Raw text, a summary, or a headline; stored as provided.
    pub text: String,
    pub entities: Vec<EntityId>,
}

/// Reads a corpus from JSONL, enforcing id uniqueness.
pub fn read_news_jsonl<R: BufRead>(reader: R) -> Result<Vec<NewsArticle>, DatasetError> {
    let mut articles: Vec<NewsArticle> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let article: NewsArticle = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Adapter(format!("news line {}: {e}", lineno + 1)))?;
        if !seen.insert(article.id.clone()) {
            return Err(DatasetError::Adapter(format!(
                "duplicate article id {:?} at line {}",
                article.id,
                lineno + 1
            )));
        }
        articles.push(article);
    }
    Ok(articles)
}

/// Writes a corpus as JSONL in the given order.
pub fn write_news_jsonl<W: Write>(
    mut writer: W,
    articles: &[NewsArticle],
) -> Result<(), DatasetError> {
    for article in articles {
        serde_json::to_writer(&mut writer, article)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
