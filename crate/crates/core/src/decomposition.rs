//! Cluster decomposition of global AUC and additive per-cluster metrics.
//!
//! Every positive/negative pair belongs to exactly one block
//! `P_i x N_j` of the cluster partition. Weighting each block's conditional
//! AUC by its share of pairs, `|P_i| |N_j| / (|P| |N|)`, therefore recovers the
//! pooled AUC exactly. The diagonal blocks measure ranking inside a cluster,
//! the off-diagonal blocks measure ranking across clusters.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClusterId, ClusteredDataset};
use crate::metrics::{
    brier_score, count_as, log_loss_detailed, pair_counts_unchecked, MetricError, PairCounts,
    TiePolicy,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("dataset has no positive samples, AUC is undefined")]
    NoPositives,
    #[error("dataset has no negative samples, AUC is undefined")]
    NoNegatives,
    #[error("no cluster has a defined value for this criterion")]
    NoDefinedValue,
    #[error("decomposed AUC differs from pooled AUC by {residual:e}")]
    IdentityViolation { residual: f64 },
    #[error("dataset carries no probabilities in [0, 1]")]
    MissingProbabilities,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn require_both_classes<F>(ds: &ClusteredDataset<F>) -> Result<(), DecompositionError> {
    if ds.total_positives() == 0 {
        return Err(DecompositionError::NoPositives);
    }
    if ds.total_negatives() == 0 {
        return Err(DecompositionError::NoNegatives);
    }
    Ok(())
}

/// `w[i][j] = |P_i| |N_j| / (|P| |N|)`.
pub fn weight_matrix<F, T: Scalar>(
    ds: &ClusteredDataset<F>,
) -> Result<Vec<Vec<T>>, DecompositionError> {
    require_both_classes(ds)?;
    let total = u128::from(ds.total_positives()) * u128::from(ds.total_negatives());
    let clusters = ds.clusters();
    Ok(clusters
        .iter()
        .map(|ci| {
            clusters
                .iter()
                .map(|cj| {
                    T::from_counts(u128::from(ci.positives) * u128::from(cj.negatives), total)
                })
                .collect()
        })
        .collect())
}

/// Pair statistic of the positives of cluster `i` against the negatives of cluster `j`.
pub fn cell_counts<F: Float>(
    ds: &ClusteredDataset<F>,
    i: usize,
    j: usize,
    policy: TiePolicy,
) -> PairCounts {
    let (ci, cj) = (&ds.clusters()[i], &ds.clusters()[j]);
    let mut scores = Vec::with_capacity((ci.positives + cj.negatives) as usize);
    let mut labels = Vec::with_capacity(scores.capacity());
    for (&s, &y) in ci.scores.iter().zip(&ci.labels) {
        if y == 1 {
            scores.push(s);
            labels.push(1);
        }
    }
    for (&s, &y) in cj.scores.iter().zip(&cj.labels) {
        if y == 0 {
            scores.push(s);
            labels.push(0);
        }
    }
    if scores.is_empty() {
        return PairCounts {
            positives: 0,
            negatives: 0,
            credit2: 0,
        };
    }
    pair_counts_unchecked(&scores, &labels, policy)
}

/// Conditional AUC of each cluster pair; `None` where `P_i` or `N_j` is empty.
pub fn auc_matrix<F: Float, T: Scalar>(
    ds: &ClusteredDataset<F>,
    policy: TiePolicy,
) -> Result<Vec<Vec<Option<T>>>, DecompositionError> {
    require_both_classes(ds)?;
    let k = ds.num_clusters();
    Ok((0..k)
        .map(|i| (0..k).map(|j| cell_counts(ds, i, j, policy).auc()).collect())
        .collect())
}

/// Intra/inter breakdown of the pooled AUC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucDecomposition<T> {
    pub clusters: Vec<ClusterId>,
    pub pos_counts: Vec<u64>,
    pub neg_counts: Vec<u64>,
    pub weights: Vec<Vec<T>>,
    /// Row = cluster of the positive, column = cluster of the negative.
    pub auc_matrix: Vec<Vec<Option<T>>>,
    pub global_auc: T,
    pub intra_total: T,
    pub inter_total: T,
    pub residual: T,
    pub tie_policy: TiePolicy,
}

impl<T: Scalar> AucDecomposition<T> {
    pub fn diagonal(&self) -> Vec<Option<T>> {
        self.auc_matrix
            .iter()
            .enumerate()
            .map(|(i, row)| row[i].clone())
            .collect()
    }

    pub fn weight_sum(&self) -> T {
        self.weights
            .iter()
            .flatten()
            .fold(T::zero(), |acc, w| acc + w.clone())
    }

    /// Sum of `w_ij * AUC_ij` over every defined cell.
    pub fn decomposed_total(&self) -> T {
        self.intra_total.clone() + self.inter_total.clone()
    }
}

/// Decomposes the pooled AUC of `ds` into weighted cluster-pair terms.
///
/// The pooled AUC is computed from the pooled samples, not from the matrix,
/// and the call fails if the two routes disagree beyond
/// [`Scalar::identity_tolerance`].
pub fn decompose_auc<F: Float, T: Scalar>(
    ds: &ClusteredDataset<F>,
    policy: TiePolicy,
) -> Result<AucDecomposition<T>, DecompositionError> {
    let weights: Vec<Vec<T>> = weight_matrix(ds)?;
    let matrix: Vec<Vec<Option<T>>> = auc_matrix(ds, policy)?;

    let (scores, labels) = ds.pooled();
    let global_auc: T = pair_counts_unchecked(&scores, &labels, policy)
        .auc()
        .expect("both classes present");

    let mut intra_total = T::zero();
    let mut inter_total = T::zero();
    for (i, (w_row, a_row)) in weights.iter().zip(&matrix).enumerate() {
        for (j, (w, a)) in w_row.iter().zip(a_row).enumerate() {
            if let Some(a) = a {
                let term = w.clone() * a.clone();
                if i == j {
                    intra_total = intra_total + term;
                } else {
                    inter_total = inter_total + term;
                }
            }
        }
    }
    let residual = global_auc.clone() - intra_total.clone() - inter_total.clone();
    if residual.abs() > T::identity_tolerance() {
        return Err(DecompositionError::IdentityViolation {
            residual: residual.to_f64(),
        });
    }

    let clusters = ds.clusters();
    Ok(AucDecomposition {
        clusters: ds.cluster_ids(),
        pos_counts: clusters.iter().map(|c| c.positives).collect(),
        neg_counts: clusters.iter().map(|c| c.negatives).collect(),
        weights,
        auc_matrix: matrix,
        global_auc,
        intra_total,
        inter_total,
        residual,
        tie_policy: policy,
    })
}

/// Naive within-cluster weighted average versus the pooled AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonAdditivity<T> {
    pub naive_weighted_avg: T,
    pub global_auc: T,
    pub gap: T,
}

/// Weights each within-cluster AUC by `|P_k| |N_k| / (|P| |N|)` and sums.
///
/// Those weights do not sum to one in general, and the sum misses every
/// cross-cluster pair, so `gap` is typically nonzero.
pub fn demonstrate_non_additivity<F: Float, T: Scalar>(
    ds: &ClusteredDataset<F>,
    policy: TiePolicy,
) -> Result<NonAdditivity<T>, DecompositionError> {
    let d: AucDecomposition<T> = decompose_auc(ds, policy)?;
    if d.diagonal().iter().all(Option::is_none) {
        return Err(DecompositionError::NoDefinedValue);
    }
    // The naive weights are exactly the diagonal pair weights.
    let naive = d.intra_total.clone();
    Ok(NonAdditivity {
        gap: d.global_auc.clone() - naive.clone(),
        naive_weighted_avg: naive,
        global_auc: d.global_auc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditiveMetric {
    Brier,
    LogLoss,
}

impl AdditiveMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            AdditiveMetric::Brier => "brier",
            AdditiveMetric::LogLoss => "log_loss",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMetric<F> {
    pub cluster: ClusterId,
    pub n: usize,
    pub weight: F,
    pub value: F,
}

/// A mean-type metric broken down over the cluster partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdditiveDecomposition<F> {
    pub metric: AdditiveMetric,
    pub per_cluster: Vec<ClusterMetric<F>>,
    /// Metric evaluated on the pooled samples.
    pub global_value: F,
    /// Probabilities moved by the log-loss clamp; always 0 for Brier.
    pub clamped: usize,
}

impl<F: Float> AdditiveDecomposition<F> {
    /// `sum_k (n_k / n) * value_k`.
    pub fn weighted_total(&self) -> F {
        self.per_cluster
            .iter()
            .fold(F::zero(), |acc, c| acc + c.weight * c.value)
    }

    pub fn weight_sum(&self) -> F {
        self.per_cluster.iter().fold(F::zero(), |acc, c| acc + c.weight)
    }
}

fn evaluate<F: Float>(
    metric: AdditiveMetric,
    probs: &[F],
    labels: &[u8],
    clamp_eps: F,
) -> Result<(F, usize), MetricError> {
    match metric {
        AdditiveMetric::Brier => brier_score(probs, labels).map(|v| (v, 0)),
        AdditiveMetric::LogLoss => log_loss_detailed(probs, labels, clamp_eps).map(|l| (l.value, l.clamped)),
    }
}

/// Per-cluster Brier score or log loss with `n_k / n` weights.
///
/// `clamp_eps` only affects log loss.
pub fn decompose_additive<F: Float>(
    ds: &ClusteredDataset<F>,
    metric: AdditiveMetric,
    clamp_eps: F,
) -> Result<AdditiveDecomposition<F>, DecompositionError> {
    let pooled = ds
        .pooled_probabilities()
        .ok_or(DecompositionError::MissingProbabilities)?;
    let (_, labels) = ds.pooled();
    let (global_value, clamped) = evaluate(metric, &pooled, &labels, clamp_eps)?;

    let n = count_as::<F>(ds.len());
    let per_cluster = ds
        .clusters()
        .iter()
        .map(|c| {
            let probs = c.probabilities.as_ref().expect("checked above");
            let (value, _) = evaluate(metric, probs, &c.labels, clamp_eps)?;
            Ok(ClusterMetric {
                cluster: c.id.clone(),
                n: c.len(),
                weight: count_as::<F>(c.len()) / n,
                value,
            })
        })
        .collect::<Result<Vec<_>, DecompositionError>>()?;

    Ok(AdditiveDecomposition {
        metric,
        per_cluster,
        global_value,
        clamped,
    })
}

/// Rule for picking the worst cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorstCriterion {
    /// Smallest defined within-cluster AUC.
    MinDiagonalAuc,
    /// Largest per-cluster error metric.
    MaxMetric,
}

/// Something that assigns each cluster an optional score.
pub trait PerClusterValues {
    fn cluster_values(&self) -> Vec<(ClusterId, Option<f64>)>;
}

impl<T: Scalar> PerClusterValues for AucDecomposition<T> {
    fn cluster_values(&self) -> Vec<(ClusterId, Option<f64>)> {
        self.clusters
            .iter()
            .cloned()
            .zip(self.diagonal().iter().map(|v| v.as_ref().map(Scalar::to_f64)))
            .collect()
    }
}

impl<F: Float> PerClusterValues for AdditiveDecomposition<F> {
    fn cluster_values(&self) -> Vec<(ClusterId, Option<f64>)> {
        self.per_cluster
            .iter()
            .map(|c| (c.cluster.clone(), c.value.to_f64()))
            .collect()
    }
}

/// Worst cluster under `criterion`; ties go to the earliest cluster.
pub fn worst_cluster(
    decomp: &impl PerClusterValues,
    criterion: WorstCriterion,
) -> Result<ClusterId, DecompositionError> {
    let mut best: Option<(ClusterId, f64)> = None;
    for (id, value) in decomp.cluster_values() {
        let Some(v) = value else { continue };
        let better = match (&best, criterion) {
            (None, _) => true,
            (Some((_, b)), WorstCriterion::MinDiagonalAuc) => v < *b,
            (Some((_, b)), WorstCriterion::MaxMetric) => v > *b,
        };
        if better {
            best = Some((id, v));
        }
    }
    best.map(|(id, _)| id)
        .ok_or(DecompositionError::NoDefinedValue)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    fn toy() -> ClusteredDataset<f64> {
        ClusteredDataset::from_probability_columns(
            &[0.9, 0.8, 0.4, 0.6, 0.7, 0.3],
            &[1, 1, 0, 1, 0, 0],
            &["C1", "C1", "C1", "C2", "C2", "C2"],
        )
        .unwrap()
    }

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn toy_weights_exact() {
        let w: Vec<Vec<Rational>> = weight_matrix(&toy()).unwrap();
        assert_eq!(w, vec![vec![r(2, 9), r(4, 9)], vec![r(1, 9), r(2, 9)]]);
    }

    #[test]
    fn toy_matrix_exact() {
        let m: Vec<Vec<Option<Rational>>> = auc_matrix(&toy(), TiePolicy::HalfCredit).unwrap();
        assert_eq!(
            m,
            vec![
                vec![Some(r(1, 1)), Some(r(1, 1))],
                vec![Some(r(1, 1)), Some(r(1, 2))]
            ]
        );
    }

    #[test]
    fn toy_totals_exact() {
        for policy in [TiePolicy::HalfCredit, TiePolicy::Strict] {
            let d: AucDecomposition<Rational> = decompose_auc(&toy(), policy).unwrap();
            assert_eq!(d.global_auc, r(8, 9));
            assert_eq!(d.intra_total, r(1, 3));
            assert_eq!(d.inter_total, r(5, 9));
            assert_eq!(d.residual, r(0, 1));
            assert_eq!(d.weight_sum(), r(1, 1));
        }
    }

    #[test]
    fn toy_totals_f64() {
        let d: AucDecomposition<f64> = decompose_auc(&toy(), TiePolicy::HalfCredit).unwrap();
        assert!((d.global_auc - 8.0 / 9.0).abs() < 1e-12);
        assert!((d.intra_total - 1.0 / 3.0).abs() < 1e-12);
        assert!((d.inter_total - 5.0 / 9.0).abs() < 1e-12);
        assert!(d.residual.abs() < 1e-12);
    }

    #[test]
    fn single_cluster() {
        let ds = toy().merged("all");
        let w: Vec<Vec<f64>> = weight_matrix(&ds).unwrap();
        assert_eq!(w, vec![vec![1.0]]);
        let d: AucDecomposition<f64> = decompose_auc(&ds, TiePolicy::HalfCredit).unwrap();
        assert_eq!(d.intra_total, d.global_auc);
        assert_eq!(d.inter_total, 0.0);
        let na: NonAdditivity<f64> = demonstrate_non_additivity(&ds, TiePolicy::HalfCredit).unwrap();
        assert_eq!(na.gap, 0.0);
    }

    #[test]
    fn cluster_without_positives() {
        let ds = ClusteredDataset::from_columns(
            &[0.9, 0.1, 0.3, 0.2],
            &[1, 0, 0, 0],
            &["a", "a", "b", "b"],
        )
        .unwrap();
        let w: Vec<Vec<Rational>> = weight_matrix(&ds).unwrap();
        assert_eq!(w[1], vec![r(0, 1), r(0, 1)]);
        let m: Vec<Vec<Option<f64>>> = auc_matrix(&ds, TiePolicy::HalfCredit).unwrap();
        assert_eq!(m[1], vec![None, None]);
        assert_eq!(m[0], vec![Some(1.0), Some(1.0)]);
        let d: AucDecomposition<Rational> = decompose_auc(&ds, TiePolicy::Strict).unwrap();
        assert_eq!(d.residual, r(0, 1));
    }

    #[test]
    fn missing_class_errors() {
        let ds = ClusteredDataset::from_columns(&[0.1, 0.2], &[0, 0], &["a", "b"]).unwrap();
        assert_eq!(
            decompose_auc::<f64, f64>(&ds, TiePolicy::HalfCredit),
            Err(DecompositionError::NoPositives)
        );
        let ds = ClusteredDataset::from_columns(&[0.1, 0.2], &[1, 1], &["a", "b"]).unwrap();
        assert_eq!(
            weight_matrix::<f64, f64>(&ds),
            Err(DecompositionError::NoNegatives)
        );
    }

    #[test]
    fn toy_non_additivity() {
        let na: NonAdditivity<Rational> =
            demonstrate_non_additivity(&toy(), TiePolicy::HalfCredit).unwrap();
        assert_eq!(na.naive_weighted_avg, r(1, 3));
        assert_eq!(na.global_auc, r(8, 9));
        assert_eq!(na.gap, r(5, 9));
    }

    #[test]
    fn non_additivity_needs_a_mixed_cluster() {
        // Every cluster single-class: diagonal entirely undefined.
        let ds = ClusteredDataset::from_columns(&[0.9, 0.1], &[1, 0], &["a", "b"]).unwrap();
        assert_eq!(
            demonstrate_non_additivity::<f64, f64>(&ds, TiePolicy::HalfCredit),
            Err(DecompositionError::NoDefinedValue)
        );
    }

    #[test]
    fn additive_perfect_predictions() {
        let ds = ClusteredDataset::from_probability_columns(
            &[1.0, 0.0, 1.0, 0.0],
            &[1, 0, 1, 0],
            &["a", "a", "b", "b"],
        )
        .unwrap();
        let d = decompose_additive(&ds, AdditiveMetric::Brier, 1e-15).unwrap();
        assert!(d.per_cluster.iter().all(|c| c.value == 0.0));
        assert_eq!(d.global_value, 0.0);
    }

    #[test]
    fn additive_sizes_two_and_four() {
        let probs = [0.2, 0.9, 0.6, 0.1, 0.3, 0.8];
        let labels = [0, 1, 1, 0, 0, 0];
        let ds = ClusteredDataset::from_probability_columns(
            &probs,
            &labels,
            &["a", "a", "b", "b", "b", "b"],
        )
        .unwrap();
        let d = decompose_additive(&ds, AdditiveMetric::Brier, 1e-15).unwrap();
        let b1 = brier_score(&probs[..2], &labels[..2]).unwrap();
        let b2 = brier_score(&probs[2..], &labels[2..]).unwrap();
        assert_eq!(d.per_cluster[0].value, b1);
        assert_eq!(d.per_cluster[1].value, b2);
        assert!((d.global_value - (2.0 / 6.0 * b1 + 4.0 / 6.0 * b2)).abs() < 1e-15);
        assert!((d.weight_sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn additive_requires_probabilities() {
        let ds = ClusteredDataset::from_columns(&[3.0, -1.0], &[1, 0], &["a", "a"]).unwrap();
        assert_eq!(
            decompose_additive(&ds, AdditiveMetric::LogLoss, 1e-15),
            Err(DecompositionError::MissingProbabilities)
        );
        let ds =
            ClusteredDataset::from_probability_columns(&[1.5, 0.0], &[1, 0], &["a", "a"]).unwrap();
        assert_eq!(
            decompose_additive(&ds, AdditiveMetric::Brier, 1e-15),
            Err(DecompositionError::Metric(MetricError::ProbabilityOutOfRange { index: 0 }))
        );
    }

    #[test]
    fn log_loss_reports_clamping() {
        let ds = ClusteredDataset::from_probability_columns(
            &[1.0, 0.0, 0.5],
            &[1, 0, 1],
            &["a", "a", "b"],
        )
        .unwrap();
        let d = decompose_additive(&ds, AdditiveMetric::LogLoss, 1e-15).unwrap();
        assert_eq!(d.clamped, 2);
        assert!((d.weighted_total() - d.global_value).abs() < 1e-12);
    }

    #[test]
    fn worst_cluster_toy() {
        let d: AucDecomposition<f64> = decompose_auc(&toy(), TiePolicy::HalfCredit).unwrap();
        assert_eq!(
            worst_cluster(&d, WorstCriterion::MinDiagonalAuc).unwrap(),
            ClusterId::from("C2")
        );
    }

    #[test]
    fn worst_cluster_ties_and_undefined() {
        let ds = ClusteredDataset::from_probability_columns(
            &[0.5, 0.5, 0.5, 0.5],
            &[1, 0, 1, 0],
            &["x", "x", "y", "y"],
        )
        .unwrap();
        let b = decompose_additive(&ds, AdditiveMetric::Brier, 1e-15).unwrap();
        assert_eq!(
            worst_cluster(&b, WorstCriterion::MaxMetric).unwrap(),
            ClusterId::from("x")
        );

        let ds = ClusteredDataset::from_columns(&[0.9, 0.1], &[1, 0], &["a", "b"]).unwrap();
        let d: AucDecomposition<f64> = decompose_auc(&ds, TiePolicy::HalfCredit).unwrap();
        assert_eq!(
            worst_cluster(&d, WorstCriterion::MinDiagonalAuc),
            Err(DecompositionError::NoDefinedValue)
        );
    }

    struct Fixed(Vec<(ClusterId, Option<f64>)>);

    impl PerClusterValues for Fixed {
        fn cluster_values(&self) -> Vec<(ClusterId, Option<f64>)> {
            self.0.clone()
        }
    }

    #[test]
    fn worst_cluster_three_diagonals() {
        let values = Fixed(vec![
            ("1".into(), Some(0.62)),
            ("2".into(), Some(0.92)),
            ("3".into(), Some(0.70)),
        ]);
        assert_eq!(
            worst_cluster(&values, WorstCriterion::MinDiagonalAuc).unwrap(),
            ClusterId::from("1")
        );
    }
}
