//! Distribution shift between a focus cluster and the rest of the data.
//!
//! Each feature is binned on shared edges, the bin frequencies are smoothed
//! with a small additive mass, and two divergences are reported: the
//! population stability index and the Jensen-Shannon divergence.

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ClusterId, ClusteredDataset};
use crate::metrics::count_as;

pub const DEFAULT_NUM_BINS: usize = 10;
pub const DEFAULT_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DriftError {
    #[error("cannot bin an empty sample")]
    EmptyInput,
    #[error("at least 2 bins are required, got {0}")]
    TooFewBins(usize),
    #[error("feature is constant, every value falls in one bin")]
    ConstantFeature,
    #[error("histograms do not share bin edges")]
    EdgeMismatch,
    #[error("value at index {index} is not finite")]
    NonFiniteValue { index: usize },
    #[error("smoothing mass must be positive and finite")]
    InvalidSmoothing,
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("dataset has no feature columns")]
    NoFeatures,
    #[error("empty complement: focus cluster is the whole dataset, nothing to compare against")]
    EmptyComplement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    /// Edges at pooled empirical quantiles.
    #[default]
    Quantile,
    /// Equal-width edges between the pooled minimum and maximum.
    Uniform,
    /// One bin per distinct value, for low-cardinality codes.
    Categorical,
}

/// Counts of a sample over shared edges.
///
/// `edges[0]` is `-inf` and the last edge is `+inf`. Bin `b` covers
/// `[edges[b], edges[b + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedHistogram<F> {
    pub edges: Vec<F>,
    pub counts: Vec<u64>,
    pub smoothed_probs: Vec<F>,
}

impl<F: Float> BinnedHistogram<F> {
    /// Bins `values` on `interior` edges (strictly ascending, finite).
    pub fn from_interior_edges(interior: &[F], values: &[F], smoothing: F) -> Self {
        let mut counts = vec![0u64; interior.len() + 1];
        for &v in values {
            counts[interior.partition_point(|&e| e <= v)] += 1;
        }
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(F::neg_infinity());
        edges.extend_from_slice(interior);
        edges.push(F::infinity());

        let n = count_as::<F>(values.len().max(1));
        let raw: Vec<F> = counts
            .iter()
            .map(|&c| count_as::<F>(c as usize) / n + smoothing)
            .collect();
        let total = raw.iter().fold(F::zero(), |a, &b| a + b);
        let smoothed_probs = raw.into_iter().map(|r| r / total).collect();
        BinnedHistogram {
            edges,
            counts,
            smoothed_probs,
        }
    }

    pub fn num_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn check_finite<F: Float>(values: &[F], offset: usize) -> Result<(), DriftError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DriftError::NonFiniteValue { index: offset + i }),
        None => Ok(()),
    }
}

/// Linear-interpolation quantile of ascending `sorted` at `q` in `[0, 1]`.
fn quantile<F: Float>(sorted: &[F], q: F) -> F {
    let last = sorted.len() - 1;
    let pos = q * count_as::<F>(last);
    let lo = pos.floor().to_usize().unwrap_or(0).min(last);
    let hi = (lo + 1).min(last);
    let frac = pos - count_as::<F>(lo);
    if frac == F::zero() || lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Interior edges for `pooled` (sorted ascending, nonempty).
fn interior_edges<F: Float>(
    pooled: &[F],
    num_bins: usize,
    strategy: BinStrategy,
) -> Result<Vec<F>, DriftError> {
    let min = pooled[0];
    let max = pooled[pooled.len() - 1];
    if min == max {
        return Err(DriftError::ConstantFeature);
    }
    let bins = count_as::<F>(num_bins);
    let mut edges: Vec<F> = match strategy {
        BinStrategy::Quantile => (1..num_bins)
            .map(|b| quantile(pooled, count_as::<F>(b) / bins))
            .collect(),
        BinStrategy::Uniform => (1..num_bins)
            .map(|b| min + (max - min) * count_as::<F>(b) / bins)
            .collect(),
        BinStrategy::Categorical => pooled.to_vec(),
    };
    // An edge at the minimum would leave the lowest bin empty.
    edges.retain(|&e| e > min);
    edges.dedup();
    if edges.is_empty() {
        // Everything below the maximum is tied at the minimum.
        edges.push(max);
    }
    Ok(edges)
}

/// Bins two samples on common edges computed from their concatenation.
pub fn bin_feature<F: Float>(
    values_a: &[F],
    values_b: &[F],
    num_bins: usize,
    strategy: BinStrategy,
) -> Result<(BinnedHistogram<F>, BinnedHistogram<F>), DriftError> {
    let smoothing = F::from(DEFAULT_SMOOTHING).expect("representable");
    bin_feature_smoothed(values_a, values_b, num_bins, strategy, smoothing)
}

pub fn bin_feature_smoothed<F: Float>(
    values_a: &[F],
    values_b: &[F],
    num_bins: usize,
    strategy: BinStrategy,
    smoothing: F,
) -> Result<(BinnedHistogram<F>, BinnedHistogram<F>), DriftError> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(DriftError::EmptyInput);
    }
    if num_bins < 2 && strategy != BinStrategy::Categorical {
        return Err(DriftError::TooFewBins(num_bins));
    }
    if !(smoothing > F::zero() && smoothing.is_finite()) {
        return Err(DriftError::InvalidSmoothing);
    }
    check_finite(values_a, 0)?;
    check_finite(values_b, values_a.len())?;

    let mut pooled: Vec<F> = values_a.iter().chain(values_b).copied().collect();
    pooled.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let interior = interior_edges(&pooled, num_bins, strategy)?;
    Ok((
        BinnedHistogram::from_interior_edges(&interior, values_a, smoothing),
        BinnedHistogram::from_interior_edges(&interior, values_b, smoothing),
    ))
}

fn same_edges<F: Float>(a: &BinnedHistogram<F>, b: &BinnedHistogram<F>) -> Result<(), DriftError> {
    if a.edges == b.edges && a.smoothed_probs.len() == b.smoothed_probs.len() {
        Ok(())
    } else {
        Err(DriftError::EdgeMismatch)
    }
}

/// `sum_b (p_b - q_b) ln(p_b / q_b)` over strictly positive probability vectors.
pub fn psi_from_probs<F: Float>(p: &[F], q: &[F]) -> F {
    p.iter()
        .zip(q)
        .fold(F::zero(), |acc, (&pb, &qb)| acc + (pb - qb) * (pb.ln() - qb.ln()))
}

fn kl<F: Float>(p: &[F], m: &[F]) -> F {
    p.iter().zip(m).fold(F::zero(), |acc, (&pb, &mb)| {
        if pb > F::zero() {
            acc + pb * (pb / mb).ln()
        } else {
            acc
        }
    })
}

/// Jensen-Shannon divergence in nats, clamped to `[0, ln 2]`.
pub fn js_from_probs<F: Float>(p: &[F], q: &[F]) -> F {
    let two = F::one() + F::one();
    let m: Vec<F> = p.iter().zip(q).map(|(&a, &b)| (a + b) / two).collect();
    let js = (kl(p, &m) + kl(q, &m)) / two;
    js.max(F::zero()).min(two.ln())
}

pub fn psi<F: Float>(a: &BinnedHistogram<F>, b: &BinnedHistogram<F>) -> Result<F, DriftError> {
    same_edges(a, b)?;
    Ok(psi_from_probs(&a.smoothed_probs, &b.smoothed_probs).max(F::zero()))
}

pub fn js_divergence<F: Float>(
    a: &BinnedHistogram<F>,
    b: &BinnedHistogram<F>,
) -> Result<F, DriftError> {
    same_edges(a, b)?;
    Ok(js_from_probs(&a.smoothed_probs, &b.smoothed_probs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub num_bins: usize,
    pub strategy: BinStrategy,
    pub smoothing: f64,
    /// Features binned one bin per distinct value regardless of `strategy`.
    pub categorical: Vec<String>,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            num_bins: DEFAULT_NUM_BINS,
            strategy: BinStrategy::Quantile,
            smoothing: DEFAULT_SMOOTHING,
            categorical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDrift<F> {
    pub feature: String,
    pub psi: F,
    pub js_divergence: F,
    pub bins: usize,
    pub n_focus: usize,
    pub n_rest: usize,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport<F> {
    pub focus_cluster: ClusterId,
    pub per_feature: Vec<FeatureDrift<F>>,
    /// Features with no observed value in the focus cluster or in the rest.
    pub skipped_features: Vec<String>,
    pub label_rate_focus: F,
    pub label_rate_rest: F,
    pub label_rate_difference: F,
}

impl<F: Float> DriftReport<F> {
    /// Features ordered by descending PSI; equal values keep feature order.
    pub fn sorted_by_psi(&self) -> Vec<&FeatureDrift<F>> {
        let mut v: Vec<&FeatureDrift<F>> = self.per_feature.iter().collect();
        v.sort_by(|a, b| b.psi.partial_cmp(&a.psi).unwrap_or(std::cmp::Ordering::Equal));
        v
    }
}

/// Compares every feature of cluster `focus` against all other clusters.
pub fn drift_report<F: Float>(
    ds: &ClusteredDataset<F>,
    focus: &ClusterId,
    config: &DriftConfig,
) -> Result<DriftReport<F>, DriftError> {
    let focus_idx = ds
        .cluster_index(focus)
        .ok_or_else(|| DriftError::UnknownCluster(focus.clone()))?;
    if ds.feature_names().is_empty() {
        return Err(DriftError::NoFeatures);
    }
    if ds.num_clusters() < 2 {
        return Err(DriftError::EmptyComplement);
    }
    let smoothing = F::from(config.smoothing).ok_or(DriftError::InvalidSmoothing)?;

    let clusters = ds.clusters();
    let focus_cluster = &clusters[focus_idx];
    let mut per_feature = Vec::new();
    let mut skipped_features = Vec::new();

    for (f, name) in ds.feature_names().iter().enumerate() {
        let a: Vec<F> = focus_cluster.features[f].iter().flatten().copied().collect();
        let b: Vec<F> = clusters
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != focus_idx)
            .flat_map(|(_, c)| c.features[f].iter().flatten().copied())
            .collect();
        if a.is_empty() || b.is_empty() {
            skipped_features.push(name.clone());
            continue;
        }
        let strategy = if config.categorical.iter().any(|c| c == name) {
            BinStrategy::Categorical
        } else {
            config.strategy
        };
        let entry = match bin_feature_smoothed(&a, &b, config.num_bins, strategy, smoothing) {
            Ok((ha, hb)) => FeatureDrift {
                feature: name.clone(),
                psi: psi(&ha, &hb)?,
                js_divergence: js_divergence(&ha, &hb)?,
                bins: ha.num_bins(),
                n_focus: a.len(),
                n_rest: b.len(),
                constant: false,
            },
            Err(DriftError::ConstantFeature) => FeatureDrift {
                feature: name.clone(),
                psi: F::zero(),
                js_divergence: F::zero(),
                bins: 1,
                n_focus: a.len(),
                n_rest: b.len(),
                constant: true,
            },
            Err(e) => return Err(e),
        };
        per_feature.push(entry);
    }

    let rest_pos: u64 = ds.total_positives() - focus_cluster.positives;
    let rest_n = ds.len() - focus_cluster.len();
    let label_rate_focus =
        count_as::<F>(focus_cluster.positives as usize) / count_as::<F>(focus_cluster.len());
    let label_rate_rest = count_as::<F>(rest_pos as usize) / count_as::<F>(rest_n);
    Ok(DriftReport {
        focus_cluster: focus.clone(),
        per_feature,
        skipped_features,
        label_rate_focus,
        label_rate_rest,
        label_rate_difference: label_rate_focus - label_rate_rest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ScoredSample;
    use std::f64::consts::LN_2;

    #[test]
    fn five_point_median_split() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        let (a, b) = bin_feature(&v, &v, 2, BinStrategy::Quantile).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.edges, vec![f64::NEG_INFINITY, 3.0, f64::INFINITY]);
        // 3.0 sits on the edge and goes to the upper bin.
        assert_eq!(a.counts, vec![2, 3]);
        let sum: f64 = a.smoothed_probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature() {
        let v = [7.0; 6];
        assert_eq!(
            bin_feature(&v, &v[..3], 10, BinStrategy::Quantile),
            Err(DriftError::ConstantFeature)
        );
        assert_eq!(
            bin_feature(&v, &v, 10, BinStrategy::Uniform),
            Err(DriftError::ConstantFeature)
        );
    }

    #[test]
    fn disjoint_supports() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        for strategy in [BinStrategy::Quantile, BinStrategy::Uniform] {
            let (ha, hb) = bin_feature(&a, &b, 10, strategy).unwrap();
            let lo = ha.num_bins() / 2;
            assert!(ha.counts[lo..].iter().all(|&c| c == 0), "{strategy:?}");
            assert!(hb.counts[..lo].iter().all(|&c| c == 0), "{strategy:?}");
            let js = js_divergence(&ha, &hb).unwrap();
            assert!((js - LN_2).abs() < 1e-3 && js <= LN_2);
        }
    }

    #[test]
    fn heavy_ties_collapse_edges() {
        let mut v = vec![0.0; 50];
        v.extend((1..=50).map(f64::from));
        let (h, _) = bin_feature(&v, &v, 10, BinStrategy::Quantile).unwrap();
        assert!(h.num_bins() < 10);
        assert!(h.edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(h.counts[0], 50);
        assert!(h.counts.iter().all(|&c| c > 0));

        let mut v = vec![0.0; 99];
        v.push(1.0);
        let (h, _) = bin_feature(&v, &v, 10, BinStrategy::Quantile).unwrap();
        assert_eq!(h.counts, vec![99, 1]);
    }

    #[test]
    fn categorical_bins() {
        let a = [0.0, 1.0, 1.0, 2.0];
        let b = [2.0, 2.0, 0.0];
        let (ha, hb) = bin_feature(&a, &b, 0, BinStrategy::Categorical).unwrap();
        assert_eq!(ha.counts, vec![1, 2, 1]);
        assert_eq!(hb.counts, vec![1, 0, 2]);
    }

    #[test]
    fn binning_errors() {
        assert_eq!(
            bin_feature::<f64>(&[], &[1.0], 10, BinStrategy::Quantile),
            Err(DriftError::EmptyInput)
        );
        assert_eq!(
            bin_feature(&[1.0, 2.0], &[1.0], 1, BinStrategy::Quantile),
            Err(DriftError::TooFewBins(1))
        );
        assert_eq!(
            bin_feature(&[1.0, 2.0], &[f64::NAN], 4, BinStrategy::Quantile),
            Err(DriftError::NonFiniteValue { index: 2 })
        );
    }

    #[test]
    fn hand_computed_divergences() {
        let p = [0.5, 0.5];
        let q = [0.9, 0.1];
        let expected_psi = (0.5f64 - 0.9) * (5.0f64 / 9.0).ln() + (0.5f64 - 0.1) * 5.0f64.ln();
        assert!((psi_from_probs(&p, &q) - expected_psi).abs() < 1e-12);
        assert!((psi_from_probs(&p, &q) - 0.8789).abs() < 1e-4);

        let expected_js = 0.5 * (0.5 * (5.0f64 / 7.0).ln() + 0.5 * (5.0f64 / 3.0).ln())
            + 0.5 * (0.9 * (9.0f64 / 7.0).ln() + 0.1 * (1.0f64 / 3.0).ln());
        assert!((js_from_probs(&p, &q) - expected_js).abs() < 1e-12);
        assert!((js_from_probs(&p, &q) - 0.101749).abs() < 1e-6);
    }

    #[test]
    fn identical_histograms_have_zero_divergence() {
        let v = [0.3, 1.2, 5.0, 2.2, 0.1];
        let (a, b) = bin_feature(&v, &v, 3, BinStrategy::Uniform).unwrap();
        assert_eq!(psi(&a, &b).unwrap(), 0.0);
        assert_eq!(js_divergence(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn edge_mismatch() {
        let (a, _) = bin_feature(&[1.0, 2.0, 3.0], &[1.0], 2, BinStrategy::Uniform).unwrap();
        let (b, _) = bin_feature(&[1.0, 2.0, 9.0], &[1.0], 2, BinStrategy::Uniform).unwrap();
        assert_eq!(psi(&a, &b), Err(DriftError::EdgeMismatch));
        assert_eq!(js_divergence(&a, &b), Err(DriftError::EdgeMismatch));
    }

    fn sample(score: f64, label: u8, cluster: &str, f: [f64; 2]) -> ScoredSample<f64> {
        ScoredSample::new(score, label, cluster).with_features(vec![Some(f[0]), Some(f[1])])
    }

    #[test]
    fn duplicated_cluster_has_no_drift() {
        let rows = [(0.1, 0, [1.0, 5.0]), (0.8, 1, [2.0, 3.0]), (0.4, 0, [3.0, 1.0])];
        let samples = ["a", "b"]
            .iter()
            .flat_map(|c| rows.iter().map(move |&(s, y, f)| sample(s, y, c, f)));
        let ds = ClusteredDataset::from_samples(vec!["x".into(), "y".into()], samples).unwrap();
        let r = drift_report(&ds, &"a".into(), &DriftConfig::default()).unwrap();
        for f in &r.per_feature {
            assert!(f.psi.abs() < 1e-12 && f.js_divergence.abs() < 1e-12);
        }
        assert_eq!(r.label_rate_difference, 0.0);
    }

    #[test]
    fn label_rate_difference() {
        let mut samples = Vec::new();
        for i in 0..100 {
            samples.push(sample(0.5, u8::from(i < 30), "focus", [i as f64, 0.0]));
            samples.push(sample(0.5, u8::from(i < 2), "rest", [i as f64, 1.0]));
        }
        let ds = ClusteredDataset::from_samples(vec!["x".into(), "y".into()], samples).unwrap();
        let r = drift_report(&ds, &"focus".into(), &DriftConfig::default()).unwrap();
        assert!((r.label_rate_focus - 0.30).abs() < 1e-15);
        assert!((r.label_rate_rest - 0.02).abs() < 1e-15);
        assert!((r.label_rate_difference - 0.28).abs() < 1e-12);
    }

    #[test]
    fn constant_and_missing_features() {
        let samples = vec![
            ScoredSample::new(0.1, 0, "a").with_features(vec![Some(7.0), None]),
            ScoredSample::new(0.9, 1, "a").with_features(vec![Some(7.0), None]),
            ScoredSample::new(0.2, 0, "b").with_features(vec![Some(7.0), Some(1.0)]),
        ];
        let ds = ClusteredDataset::from_samples(vec!["c".into(), "m".into()], samples).unwrap();
        let r = drift_report(&ds, &"a".into(), &DriftConfig::default()).unwrap();
        assert_eq!(r.per_feature.len(), 1);
        assert!(r.per_feature[0].constant);
        assert_eq!((r.per_feature[0].psi, r.per_feature[0].js_divergence), (0.0, 0.0));
        assert_eq!(r.skipped_features, vec!["m".to_string()]);
    }

    #[test]
    fn report_errors() {
        let ds = ClusteredDataset::from_columns(&[0.1, 0.9], &[0, 1], &["a", "b"]).unwrap();
        assert_eq!(
            drift_report(&ds, &"zzz".into(), &DriftConfig::default()),
            Err(DriftError::UnknownCluster("zzz".into()))
        );
        assert_eq!(
            drift_report(&ds, &"a".into(), &DriftConfig::default()),
            Err(DriftError::NoFeatures)
        );
        let samples = vec![
            ScoredSample::new(0.1, 0, "a").with_features(vec![Some(1.0)]),
            ScoredSample::new(0.9, 1, "a").with_features(vec![Some(2.0)]),
        ];
        let ds = ClusteredDataset::from_samples(vec!["f".into()], samples).unwrap();
        assert_eq!(
            drift_report(&ds, &"a".into(), &DriftConfig::default()),
            Err(DriftError::EmptyComplement)
        );
    }
}
