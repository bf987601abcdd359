//! Scalar performance metrics: ROC AUC, Brier score and log loss.
//!
//! AUC is computed from a single sort of the scores. Tied scores receive a
//! midrank, and the whole statistic is carried as an integer count of
//! half-pair credits, so the final value is one division away from exact.

use std::cmp::Ordering;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Default clamp applied to probabilities before taking logarithms.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("score at index {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("label at index {index} is {value}, expected 0 or 1")]
    LabelOutOfDomain { index: usize, value: u8 },
    #[error("probability at index {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize },
    #[error("clamp epsilon must lie in (0, 0.5), got {0}")]
    InvalidEpsilon(f64),
}

/// How a positive/negative pair with equal scores is credited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// A tie counts as half a correctly ordered pair (Mann-Whitney convention).
    #[default]
    HalfCredit,
    /// A tie counts as a misordered pair: only `s+ > s-` is credited.
    Strict,
}

impl TiePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            TiePolicy::HalfCredit => "half_credit",
            TiePolicy::Strict => "strict",
        }
    }
}

/// Exact pair statistic of a scored sample.
///
/// `credit2` is twice the number of correctly ordered positive/negative
/// pairs under the chosen tie policy, which keeps half credits integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub positives: u64,
    pub negatives: u64,
    pub credit2: u128,
}

impl PairCounts {
    pub fn pairs(&self) -> u128 {
        u128::from(self.positives) * u128::from(self.negatives)
    }

    /// `None` when either class is absent.
    pub fn auc<T: Scalar>(&self) -> Option<T> {
        let pairs = self.pairs();
        (pairs > 0).then(|| T::from_counts(self.credit2, 2 * pairs))
    }
}

pub(crate) fn check_labels(labels: &[u8]) -> Result<(), MetricError> {
    match labels.iter().position(|&y| y > 1) {
        Some(index) => Err(MetricError::LabelOutOfDomain {
            index,
            value: labels[index],
        }),
        None => Ok(()),
    }
}

fn check_lengths(left: usize, right: usize) -> Result<(), MetricError> {
    if left != right {
        return Err(MetricError::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

/// Counts correctly ordered positive/negative pairs via midranks.
pub fn pair_counts<F: Float>(
    scores: &[F],
    labels: &[u8],
    policy: TiePolicy,
) -> Result<PairCounts, MetricError> {
    check_lengths(scores.len(), labels.len())?;
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFiniteScore { index });
    }
    check_labels(labels)?;
    Ok(pair_counts_unchecked(scores, labels, policy))
}

/// Same as [`pair_counts`] for inputs already known to be valid.
pub(crate) fn pair_counts_unchecked<F: Float>(
    scores: &[F],
    labels: &[u8],
    policy: TiePolicy,
) -> PairCounts {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(Ordering::Equal)
    });

    let positives = labels.iter().filter(|&&y| y == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;

    // Sum of doubled midranks over positives, and number of tied pos/neg pairs.
    let mut rank_sum2: u128 = 0;
    let mut tied_pairs: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let value = scores[order[start]];
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == value {
            end += 1;
        }
        let group_pos = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u128;
        let group_neg = (end - start) as u128 - group_pos;
        // Ranks start..end (1-based start+1..=end) share the midrank (start+1+end)/2.
        let midrank2 = (start + 1 + end) as u128;
        rank_sum2 += group_pos * midrank2;
        tied_pairs += group_pos * group_neg;
        start = end;
    }

    let p = u128::from(positives);
    let half_credit2 = rank_sum2 - p * (p + 1);
    let credit2 = match policy {
        TiePolicy::HalfCredit => half_credit2,
        TiePolicy::Strict => half_credit2 - tied_pairs,
    };
    PairCounts {
        positives,
        negatives,
        credit2,
    }
}

/// Probability that a random positive outscores a random negative.
///
/// Returns `Ok(None)` when the sample lacks one of the two classes.
pub fn auc<F: Float + Scalar>(
    scores: &[F],
    labels: &[u8],
    policy: TiePolicy,
) -> Result<Option<F>, MetricError> {
    Ok(pair_counts(scores, labels, policy)?.auc())
}

fn check_probabilities<F: Float>(probs: &[F], labels: &[u8]) -> Result<(), MetricError> {
    check_lengths(probs.len(), labels.len())?;
    if let Some(index) = probs
        .iter()
        .position(|&p| !(p >= F::zero() && p <= F::one()))
    {
        return Err(MetricError::ProbabilityOutOfRange { index });
    }
    check_labels(labels)
}

/// Mean squared error between predicted probabilities and outcomes.
pub fn brier_score<F: Float>(probs: &[F], labels: &[u8]) -> Result<F, MetricError> {
    check_probabilities(probs, labels)?;
    let sum = probs.iter().zip(labels).fold(F::zero(), |acc, (&p, &y)| {
        let err = p - label_value::<F>(y);
        acc + err * err
    });
    Ok(sum / count_as::<F>(probs.len()))
}

/// Log loss together with the number of probabilities moved by clamping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLoss<F> {
    pub value: F,
    pub clamped: usize,
}

/// Mean negative log-likelihood (natural log) of the outcomes.
pub fn log_loss<F: Float>(probs: &[F], labels: &[u8], clamp_eps: F) -> Result<F, MetricError> {
    log_loss_detailed(probs, labels, clamp_eps).map(|l| l.value)
}

pub fn log_loss_detailed<F: Float>(
    probs: &[F],
    labels: &[u8],
    clamp_eps: F,
) -> Result<LogLoss<F>, MetricError> {
    let half = F::one() / (F::one() + F::one());
    if !(clamp_eps > F::zero() && clamp_eps < half) {
        return Err(MetricError::InvalidEpsilon(
            clamp_eps.to_f64().unwrap_or(f64::NAN),
        ));
    }
    check_probabilities(probs, labels)?;
    let lo = clamp_eps;
    let hi = F::one() - clamp_eps;
    let mut clamped = 0;
    let mut sum = F::zero();
    for (&p, &y) in probs.iter().zip(labels) {
        let q = p.max(lo).min(hi);
        if q != p {
            clamped += 1;
        }
        sum = sum - if y == 1 { q.ln() } else { (F::one() - q).ln() };
    }
    Ok(LogLoss {
        value: sum / count_as::<F>(probs.len()),
        clamped,
    })
}

fn label_value<F: Float>(y: u8) -> F {
    if y == 1 {
        F::one()
    } else {
        F::zero()
    }
}

pub(crate) fn count_as<F: Float>(n: usize) -> F {
    F::from(n).expect("count representable as float")
}
