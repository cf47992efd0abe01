//! Minimal chat-completions client with retries, backoff, and a
//! per-endpoint request-rate floor.
//!
//! Transport failures, 429/5xx statuses, and malformed response envelopes
//! are treated as transient and retried with exponential backoff. A
//! well-formed completion whose content cannot be parsed is a model
//! failure, not a transport failure, and is surfaced immediately.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("endpoint unavailable after {attempts} attempts: {last_error}")]
    EndpointUnavailable { attempts: u32, last_error: String },
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("failed to build http client: {0}")]
    Build(String),
    #[error("judge endpoints require deterministic decoding; temperature is {0}, expected 0")]
    NonDeterministicJudge(f64),
}

/// Connection settings for one chat endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key; secrets never
    /// appear in config files.
    pub api_key_env: Option<String>,
    pub max_parallelism: usize,
    pub timeout_secs: u64,
    pub retry_cap: u32,
    pub initial_backoff_ms: u64,
    /// Minimum spacing between request starts; 0 disables the limit.
    pub min_request_interval_ms: u64,
    pub temperature: f64,
    pub n_samples: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: None,
            max_parallelism: 4,
            timeout_secs: 60,
            retry_cap: 3,
            initial_backoff_ms: 250,
            min_request_interval_ms: 0,
            temperature: 0.0,
            n_samples: 1,
        }
    }
}

impl EndpointConfig {
    /// Full chat-completions URL.
    pub fn completions_url(&self) -> String {
        let trimmed = self.base_url.trim_end_matches('/');
        if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        }
    }
}

/// One request/response exchange, kept for the audit trail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub status: Option<u16>,
    pub body: String,
    pub error: Option<String>,
}

/// A successful completion plus its audit trail.
#[derive(Debug, Clone)]
pub struct Completion {
    pub content: String,
    pub latency_ms: u64,
    pub request_body: String,
    pub attempts: Vec<AttemptRecord>,
}

pub struct ChatClient {
    config: EndpointConfig,
    http: reqwest::blocking::Client,
    api_key: Option<String>,
    last_request: Mutex<Option<Instant>>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| ClientError::MissingApiKey(var.clone()))?)
            }
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Build(e.to_string()))?;
        Ok(ChatClient {
            config,
            http,
            api_key,
            last_request: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn throttle(&self) {
        if self.config.min_request_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_request_interval_ms);
        let wait = {
            let mut last = self.last_request.lock().expect("rate limiter lock");
            let now = Instant::now();
            let wait = match *last {
                Some(prev) => (prev + interval).saturating_duration_since(now),
                None => Duration::ZERO,
            };
            *last = Some(now + wait);
            wait
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    /// Sends one prompt and returns the assistant message content, retrying
    /// transient failures.
    pub fn complete(&self, prompt: &str) -> Result<Completion, ClientError> {
        let request_body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        })
        .to_string();

        let start = Instant::now();
        let mut attempts = Vec::new();
        let mut last_error = String::from("no attempts made");

        for attempt in 0..=self.config.retry_cap {
            if attempt > 0 {
                let backoff = self
                    .config
                    .initial_backoff_ms
                    .saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            self.throttle();

            let mut request = self
                .http
                .post(self.config.completions_url())
                .header("content-type", "application/json")
                .body(request_body.clone());
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }

            match request.send() {
                Err(err) => {
                    last_error = format!("transport: {err}");
                    attempts.push(AttemptRecord {
                        attempt,
                        status: None,
                        body: String::new(),
                        error: Some(last_error.clone()),
                    });
                }
                Ok(response) => {
                    let status = response.status();
                    let body = response.text().unwrap_or_default();
                    if status.is_server_error() || status.as_u16() == 429 {
                        last_error = format!("status {status}");
                        attempts.push(AttemptRecord {
                            attempt,
                            status: Some(status.as_u16()),
                            body,
                            error: Some(last_error.clone()),
                        });
                        continue;
                    }
                    if !status.is_success() {
                        // 4xx other than 429 will not improve on retry
                        attempts.push(AttemptRecord {
                            attempt,
                            status: Some(status.as_u16()),
                            body: body.clone(),
                            error: Some(format!("status {status}")),
                        });
                        return Err(ClientError::EndpointUnavailable {
                            attempts: attempt + 1,
                            last_error: format!("status {status}: {body}"),
                        });
                    }
                    match extract_content(&body) {
                        Some(content) => {
                            attempts.push(AttemptRecord {
                                attempt,
                                status: Some(status.as_u16()),
                                body,
                                error: None,
                            });
                            return Ok(Completion {
                                content,
                                latency_ms: start.elapsed().as_millis() as u64,
                                request_body,
                                attempts,
                            });
                        }
                        None => {
                            last_error = "malformed completion envelope".to_string();
                            attempts.push(AttemptRecord {
                                attempt,
                                status: Some(status.as_u16()),
                                body,
                                error: Some(last_error.clone()),
                            });
                        }
                    }
                }
            }
        }

        Err(ClientError::EndpointUnavailable {
            attempts: self.config.retry_cap + 1,
            last_error,
        })
    }
}

fn extract_content(body: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(body).ok()?;
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}
