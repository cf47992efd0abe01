//! Supply-chain disruption forecasting harness.
//!
//! The pipeline turns monthly disruption-index series plus timestamped news
//! into leakage-safe forecasting questions, elicits probabilistic forecasts
//! from pluggable backends (constant baseline, remote chat endpoint, or a
//! trainable logistic policy), scores them with log-score rewards and
//! group-relative advantages, and evaluates accuracy and calibration with
//! proper scoring rules. A rubric evaluator annotates reasoning traces for
//! six probabilistic-reasoning behaviors.
//!
//! Numeric kernels (scoring, calibration, advantages, the logistic policy)
//! are generic over [`num::Real`]; the concrete pipeline uses [`Scalar`].

pub mod dataset;
pub mod forecast;
pub mod index;
pub mod judge;
pub mod manifest;
pub mod metrics;
pub mod num;
pub mod prompt;
pub mod synth;
pub mod training;

/// Scalar type used by the concrete pipeline.
pub type Scalar = f64;

/// Probability in [0, 1], in pipeline precision.
pub type Prob = Scalar;

pub use dataset::{DatasetSummary, ForecastingQuestion, NewsArticle, Split};
pub use forecast::{EndpointConfig, FeatureVector, Forecast, ToyPolicy};
pub use index::{EntityId, EntityKind, IndexSeries, MonthStamp, SigmaEstimate};
pub use metrics::{EvalReport, ReliabilityBin};
pub use training::{AdvantageGroup, Reward, TrainConfig};

/// Derives a child RNG seed from a root seed and a context label.
///
/// Stable across platforms and releases: SHA-256 over the little-endian
/// seed bytes and the label, truncated to the first eight bytes.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}
