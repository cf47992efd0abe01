//! Proper-scoring and calibration metrics: Brier, Brier skill score, ECE,
//! Precision@k, and reliability-diagram bins.
//!
//! All kernels are generic over [`Real`]; the pipeline-facing report uses
//! [`Scalar`]. Bins are equal-width and right-closed over [0, 1], with
//! p = 0 assigned to the first bin.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::{Prob, Scalar};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no forecasts to evaluate")]
    EmptyEvaluation,
    #[error("predictions and labels differ in length: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("baseline Brier must be positive, got {0}")]
    NonPositiveBaseline(Scalar),
    #[error("precision fraction must be in (0, 1], got {0}")]
    BadFraction(Scalar),
    #[error("need at least {min} bins, got {got}")]
    TooFewBins { min: usize, got: usize },
    #[error("forecast {question_id} has no resolved label")]
    UnresolvedForecast { question_id: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean squared error between probabilities and binary outcomes.
pub fn brier<T: Real>(preds: &[T], outcomes: &[bool]) -> Result<T, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if preds.len() != outcomes.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: outcomes.len(),
        });
    }
    let total: T = preds
        .iter()
        .zip(outcomes)
        .map(|(&p, &y)| {
            let target = if y { T::one() } else { T::zero() };
            (p - target) * (p - target)
        })
        .sum();
    Ok(total / T::from_count(preds.len()))
}

/// Fractional Brier improvement over a reference forecaster.
pub fn brier_skill<T: Real>(model_brier: T, baseline_brier: T) -> Result<T, MetricsError> {
    if baseline_brier <= T::zero() {
        return Err(MetricsError::NonPositiveBaseline(
            baseline_brier.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(T::one() - model_brier / baseline_brier)
}

/// Bin index for probability `p` under `n_bins` right-closed equal-width
/// bins; p = 0 lands in the first bin.
fn bin_index<T: Real>(p: T, n_bins: usize) -> usize {
    let scaled = (p * T::from_count(n_bins)).ceil();
    let idx = scaled.to_usize().unwrap_or(0);
    idx.saturating_sub(1).min(n_bins - 1)
}

/// Expected calibration error over equal-width bins.
pub fn ece<T: Real>(preds: &[T], outcomes: &[bool], n_bins: usize) -> Result<T, MetricsError> {
    if n_bins < 1 {
        return Err(MetricsError::TooFewBins {
            min: 1,
            got: n_bins,
        });
    }
    let bins = bin_stats(preds, outcomes, n_bins)?;
    let n = T::from_count(preds.len());
    let mut total = T::zero();
    for bin in &bins {
        if bin.count == 0 {
            continue;
        }
        let weight = T::from_count(bin.count) / n;
        total += weight * (bin.mean_predicted - bin.empirical_rate).abs();
    }
    Ok(total)
}

/// One reliability-diagram bin over (lo, hi].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin<T> {
    pub lo: T,
    pub hi: T,
    pub count: usize,
    /// Mean prediction in the bin; the bin midpoint when empty.
    pub mean_predicted: T,
    pub empirical_rate: T,
}

fn bin_stats<T: Real>(
    preds: &[T],
    outcomes: &[bool],
    n_bins: usize,
) -> Result<Vec<ReliabilityBin<T>>, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if preds.len() != outcomes.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: outcomes.len(),
        });
    }
    let mut counts = vec![0usize; n_bins];
    let mut pred_sums = vec![T::zero(); n_bins];
    let mut hit_counts = vec![0usize; n_bins];
    for (&p, &y) in preds.iter().zip(outcomes) {
        let b = bin_index(p, n_bins);
        counts[b] += 1;
        pred_sums[b] += p;
        hit_counts[b] += usize::from(y);
    }
    let width = T::one() / T::from_count(n_bins);
    Ok((0..n_bins)
        .map(|b| {
            let lo = width * T::from_count(b);
            let hi = if b + 1 == n_bins {
                T::one()
            } else {
                width * T::from_count(b + 1)
            };
            let (mean_predicted, empirical_rate) = if counts[b] > 0 {
                (
                    pred_sums[b] / T::from_count(counts[b]),
                    T::from_count(hit_counts[b]) / T::from_count(counts[b]),
                )
            } else {
                ((lo + hi) / T::from_count(2), T::zero())
            };
            ReliabilityBin {
                lo,
                hi,
                count: counts[b],
                mean_predicted,
                empirical_rate,
            }
        })
        .collect())
}

/// Reliability-diagram bins partitioning [0, 1]; empty bins are kept with
/// count 0 so the partition is explicit.
pub fn reliability_bins<T: Real>(
    preds: &[T],
    outcomes: &[bool],
    n_bins: usize,
) -> Result<Vec<ReliabilityBin<T>>, MetricsError> {
    if n_bins < 2 {
        return Err(MetricsError::TooFewBins {
            min: 2,
            got: n_bins,
        });
    }
    bin_stats(preds, outcomes, n_bins)
}

/// A forecast joined with its resolved outcome, keyed for tie-breaking.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair<T> {
    pub question_id: String,
    pub predicted: T,
    pub outcome: bool,
}

/// Precision among the top `ceil(frac * n)` predictions ranked by predicted
/// probability (ties broken by ascending question id). Returns
/// (precision, k).
pub fn precision_at<T: Real>(
    pairs: &[ScoredPair<T>],
    frac: Scalar,
) -> Result<(T, usize), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(MetricsError::BadFraction(frac));
    }
    let k = ((frac * pairs.len() as Scalar).ceil() as usize).clamp(1, pairs.len());
    let mut ranked: Vec<&ScoredPair<T>> = pairs.iter().collect();
    ranked.sort_by(|a, b| {
        b.predicted
            .partial_cmp(&a.predicted)
            .expect("finite probabilities")
            .then_with(|| a.question_id.cmp(&b.question_id))
    });
    let hits = ranked[..k].iter().filter(|p| p.outcome).count();
    Ok((T::from_count(hits) / T::from_count(k), k))
}

/// Evaluation settings; bin count and ranking fraction are recorded in the
/// report so results are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_bins: usize,
    pub precision_frac: Scalar,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_bins: 10,
            precision_frac: 0.1,
        }
    }
}

/// The full evaluation report for one backend on one labeled question set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub n: usize,
    pub event_rate: Scalar,
    pub brier: Scalar,
    pub baseline_rate: Scalar,
    pub baseline_brier: Scalar,
    /// Stored as a fraction; multiply by 100 for the conventional percent.
    pub bss_vs_baseline: Scalar,
    pub ece: Scalar,
    pub n_bins: usize,
    pub precision_at_frac: Scalar,
    pub precision_frac: Scalar,
    pub k_used: usize,
    pub reliability: Vec<ReliabilityBin<Scalar>>,
}

/// Assembles every metric for a set of resolved forecasts. The baseline is
/// a constant forecaster at `baseline_rate`, scored on the same labels.
pub fn eval_report(
    backend: &str,
    pairs: &[ScoredPair<Prob>],
    baseline_rate: Prob,
    config: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let preds: Vec<Prob> = pairs.iter().map(|p| p.predicted).collect();
    let outcomes: Vec<bool> = pairs.iter().map(|p| p.outcome).collect();

    let model_brier = brier(&preds, &outcomes)?;
    let baseline_preds = vec![baseline_rate; outcomes.len()];
    let baseline_brier = brier(&baseline_preds, &outcomes)?;
    let bss = brier_skill(model_brier, baseline_brier)?;
    let calibration_error = ece(&preds, &outcomes, config.n_bins)?;
    let (precision, k_used) = precision_at(pairs, config.precision_frac)?;
    let reliability = reliability_bins(&preds, &outcomes, config.n_bins.max(2))?;
    let event_rate = outcomes.iter().filter(|&&y| y).count() as Scalar / outcomes.len() as Scalar;

    Ok(EvalReport {
        backend: backend.to_string(),
        n: pairs.len(),
        event_rate,
        brier: model_brier,
        baseline_rate,
        baseline_brier,
        bss_vs_baseline: bss,
        ece: calibration_error,
        n_bins: config.n_bins,
        precision_at_frac: precision,
        precision_frac: config.precision_frac,
        k_used,
        reliability,
    })
}

/// Writes reliability bins as CSV (`lo,hi,count,mean_pred,emp_rate`).
pub fn write_reliability_csv<W: Write>(
    mut writer: W,
    bins: &[ReliabilityBin<Scalar>],
) -> Result<(), MetricsError> {
    writeln!(writer, "lo,hi,count,mean_pred,emp_rate")?;
    for bin in bins {
        writeln!(
            writer,
            "{},{},{},{},{}",
            bin.lo, bin.hi, bin.count, bin.mean_predicted, bin.empirical_rate
        )?;
    }
    Ok(())
}

/// Writes the bar-chart series for a report (`backend,metric,value`).
pub fn write_plot_metrics_csv<W: Write>(
    mut writer: W,
    report: &EvalReport,
) -> Result<(), MetricsError> {
    writeln!(writer, "backend,metric,value")?;
    for (metric, value) in [
        ("brier", report.brier),
        ("bss_vs_baseline", report.bss_vs_baseline),
        ("ece", report.ece),
        ("precision_at_frac", report.precision_at_frac),
    ] {
        writeln!(writer, "{},{},{}", report.backend, metric, value)?;
    }
    writeln!(writer, "baseline,metric_brier,{}", report.baseline_brier)?;
    Ok(())
}
