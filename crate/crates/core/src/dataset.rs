//! Scored samples partitioned into disjoint clusters.

use std::collections::HashMap;
use std::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("dataset has no samples")]
    Empty,
    #[error("sample {index}: score is not finite")]
    NonFiniteScore { index: usize },
    #[error("sample {index}: label {value} is not 0 or 1")]
    LabelOutOfDomain { index: usize, value: u8 },
    #[error("sample {index}: expected {expected} feature values, got {got}")]
    FeatureArity {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("sample {index}: feature value is not finite")]
    NonFiniteFeature { index: usize },
    #[error("column lengths differ: {scores} scores, {labels} labels, {clusters} cluster ids")]
    LengthMismatch {
        scores: usize,
        labels: usize,
        clusters: usize,
    },
    #[error("cluster order must be a permutation of 0..{0}")]
    BadPermutation(usize),
}

/// Opaque cluster identifier, kept verbatim from the input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub String);

impl ClusterId {
    pub fn new(id: impl Into<String>) -> Self {
        ClusterId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClusterId {
    fn from(s: &str) -> Self {
        ClusterId(s.to_owned())
    }
}

/// One prediction record.
///
/// `features` is positional and aligned with the dataset's feature names;
/// `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample<F> {
    pub score: F,
    pub label: u8,
    pub cluster: ClusterId,
    pub probability: Option<F>,
    pub features: Vec<Option<F>>,
}

impl<F> ScoredSample<F> {
    pub fn new(score: F, label: u8, cluster: impl Into<ClusterId>) -> Self {
        ScoredSample {
            score,
            label,
            cluster: cluster.into(),
            probability: None,
            features: Vec::new(),
        }
    }

    pub fn with_probability(mut self, p: F) -> Self {
        self.probability = Some(p);
        self
    }

    pub fn with_features(mut self, features: Vec<Option<F>>) -> Self {
        self.features = features;
        self
    }
}

impl From<String> for ClusterId {
    fn from(s: String) -> Self {
        ClusterId(s)
    }
}

/// Column-oriented samples of a single cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<F> {
    pub id: ClusterId,
    pub scores: Vec<F>,
    pub labels: Vec<u8>,
    /// Present only when every sample in the dataset carried a probability.
    pub probabilities: Option<Vec<F>>,
    /// One column per feature name.
    pub features: Vec<Vec<Option<F>>>,
    pub positives: u64,
    pub negatives: u64,
}

impl<F> Cluster<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Validated samples partitioned into disjoint, nonempty clusters.
///
/// Clusters keep the order in which their ids first appear.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredDataset<F> {
    feature_names: Vec<String>,
    clusters: Vec<Cluster<F>>,
    total_pos: u64,
    total_neg: u64,
}

impl<F: Float> ClusteredDataset<F> {
    pub fn from_samples(
        feature_names: Vec<String>,
        samples: impl IntoIterator<Item = ScoredSample<F>>,
    ) -> Result<Self, DatasetError> {
        let width = feature_names.len();
        let mut index_of: HashMap<ClusterId, usize> = HashMap::new();
        let mut clusters: Vec<Cluster<F>> = Vec::new();
        let mut all_have_probs = true;
        let mut n = 0;

        for (index, sample) in samples.into_iter().enumerate() {
            n += 1;
            if !sample.score.is_finite() {
                return Err(DatasetError::NonFiniteScore { index });
            }
            if sample.label > 1 {
                return Err(DatasetError::LabelOutOfDomain {
                    index,
                    value: sample.label,
                });
            }
            if sample.features.len() != width {
                return Err(DatasetError::FeatureArity {
                    index,
                    expected: width,
                    got: sample.features.len(),
                });
            }
            if sample.features.iter().flatten().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFiniteFeature { index });
            }

            let slot = *index_of.entry(sample.cluster.clone()).or_insert_with(|| {
                clusters.push(Cluster {
                    id: sample.cluster.clone(),
                    scores: Vec::new(),
                    labels: Vec::new(),
                    probabilities: Some(Vec::new()),
                    features: vec![Vec::new(); width],
                    positives: 0,
                    negatives: 0,
                });
                clusters.len() - 1
            });
            let cluster = &mut clusters[slot];
            cluster.scores.push(sample.score);
            cluster.labels.push(sample.label);
            if sample.label == 1 {
                cluster.positives += 1;
            } else {
                cluster.negatives += 1;
            }
            match sample.probability {
                Some(p) if all_have_probs => {
                    if let Some(probs) = cluster.probabilities.as_mut() {
                        probs.push(p);
                    }
                }
                _ => all_have_probs = false,
            }
            for (column, value) in cluster.features.iter_mut().zip(sample.features) {
                column.push(value);
            }
        }

        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if !all_have_probs {
            for c in &mut clusters {
                c.probabilities = None;
            }
        }
        let total_pos = clusters.iter().map(|c| c.positives).sum();
        let total_neg = clusters.iter().map(|c| c.negatives).sum();
        Ok(ClusteredDataset {
            feature_names,
            clusters,
            total_pos,
            total_neg,
        })
    }

    /// Builds a dataset from parallel score/label/cluster slices.
    pub fn from_columns<C: Into<ClusterId> + Clone>(
        scores: &[F],
        labels: &[u8],
        clusters: &[C],
    ) -> Result<Self, DatasetError> {
        check_column_lengths(scores.len(), labels.len(), clusters.len())?;
        let samples = scores
            .iter()
            .zip(labels)
            .zip(clusters)
            .map(|((&s, &y), c)| ScoredSample::new(s, y, c.clone()));
        Self::from_samples(Vec::new(), samples)
    }

    /// Like [`from_columns`](Self::from_columns) with the scores doubling as probabilities.
    pub fn from_probability_columns<C: Into<ClusterId> + Clone>(
        probs: &[F],
        labels: &[u8],
        clusters: &[C],
    ) -> Result<Self, DatasetError> {
        check_column_lengths(probs.len(), labels.len(), clusters.len())?;
        let samples = probs
            .iter()
            .zip(labels)
            .zip(clusters)
            .map(|((&p, &y), c)| ScoredSample::new(p, y, c.clone()).with_probability(p));
        Self::from_samples(Vec::new(), samples)
    }

    /// All samples moved into one cluster named `id`, preserving sample order.
    pub fn merged(&self, id: impl Into<ClusterId>) -> Self {
        let id = id.into();
        let width = self.feature_names.len();
        let mut merged = Cluster {
            id,
            scores: Vec::with_capacity(self.len()),
            labels: Vec::with_capacity(self.len()),
            probabilities: self.has_probabilities().then(Vec::new),
            features: vec![Vec::new(); width],
            positives: self.total_pos,
            negatives: self.total_neg,
        };
        for c in &self.clusters {
            merged.scores.extend_from_slice(&c.scores);
            merged.labels.extend_from_slice(&c.labels);
            if let (Some(dst), Some(src)) = (merged.probabilities.as_mut(), &c.probabilities) {
                dst.extend_from_slice(src);
            }
            for (dst, src) in merged.features.iter_mut().zip(&c.features) {
                dst.extend_from_slice(src);
            }
        }
        ClusteredDataset {
            feature_names: self.feature_names.clone(),
            clusters: vec![merged],
            total_pos: self.total_pos,
            total_neg: self.total_neg,
        }
    }

    /// Clusters rearranged so that new position `k` holds old cluster `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self, DatasetError> {
        let k = self.clusters.len();
        let mut seen = vec![false; k];
        if order.len() != k {
            return Err(DatasetError::BadPermutation(k));
        }
        for &i in order {
            if i >= k || std::mem::replace(&mut seen[i], true) {
                return Err(DatasetError::BadPermutation(k));
            }
        }
        Ok(ClusteredDataset {
            feature_names: self.feature_names.clone(),
            clusters: order.iter().map(|&i| self.clusters[i].clone()).collect(),
            total_pos: self.total_pos,
            total_neg: self.total_neg,
        })
    }
}

fn check_column_lengths(scores: usize, labels: usize, clusters: usize) -> Result<(), DatasetError> {
    if scores == labels && labels == clusters {
        Ok(())
    } else {
        Err(DatasetError::LengthMismatch {
            scores,
            labels,
            clusters,
        })
    }
}

impl<F> ClusteredDataset<F> {
    pub fn clusters(&self) -> &[Cluster<F>] {
        &self.clusters
    }

    pub fn cluster_ids(&self) -> Vec<ClusterId> {
        self.clusters.iter().map(|c| c.id.clone()).collect()
    }

    pub fn cluster_index(&self, id: &ClusterId) -> Option<usize> {
        self.clusters.iter().position(|c| &c.id == id)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn len(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn total_positives(&self) -> u64 {
        self.total_pos
    }

    pub fn total_negatives(&self) -> u64 {
        self.total_neg
    }

    pub fn has_probabilities(&self) -> bool {
        self.clusters.iter().all(|c| c.probabilities.is_some())
    }
}

impl<F: Copy> ClusteredDataset<F> {
    /// Scores and labels of every sample, cluster by cluster.
    pub fn pooled(&self) -> (Vec<F>, Vec<u8>) {
        let mut scores = Vec::with_capacity(self.len());
        let mut labels = Vec::with_capacity(self.len());
        for c in &self.clusters {
            scores.extend_from_slice(&c.scores);
            labels.extend_from_slice(&c.labels);
        }
        (scores, labels)
    }

    pub fn pooled_probabilities(&self) -> Option<Vec<F>> {
        let mut out = Vec::with_capacity(self.len());
        for c in &self.clusters {
            out.extend_from_slice(c.probabilities.as_ref()?);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ClusteredDataset<f64> {
        ClusteredDataset::from_columns(
            &[0.9, 0.8, 0.4, 0.6, 0.7, 0.3],
            &[1, 1, 0, 1, 0, 0],
            &["C1", "C1", "C1", "C2", "C2", "C2"],
        )
        .unwrap()
    }

    #[test]
    fn counts_reconcile() {
        let ds = toy();
        assert_eq!(ds.num_clusters(), 2);
        assert_eq!(ds.total_positives(), 3);
        assert_eq!(ds.total_negatives(), 3);
        let c = ds.clusters();
        assert_eq!((c[0].positives, c[0].negatives), (2, 1));
        assert_eq!((c[1].positives, c[1].negatives), (1, 2));
        assert!(!ds.has_probabilities());
    }

    #[test]
    fn first_appearance_order() {
        let ds = ClusteredDataset::from_columns(&[0.1, 0.2, 0.3], &[0, 1, 0], &["b", "a", "b"])
            .unwrap();
        assert_eq!(ds.cluster_ids(), vec![ClusterId::from("b"), ClusterId::from("a")]);
        assert_eq!(ds.clusters()[0].scores, vec![0.1, 0.3]);
    }

    #[test]
    fn rejects_invalid_samples() {
        assert_eq!(
            ClusteredDataset::<f64>::from_columns::<&str>(&[], &[], &[]),
            Err(DatasetError::Empty)
        );
        assert_eq!(
            ClusteredDataset::from_columns(&[0.1, f64::NAN], &[0, 1], &["a", "a"]),
            Err(DatasetError::NonFiniteScore { index: 1 })
        );
        assert_eq!(
            ClusteredDataset::from_columns(&[0.1], &[3], &["a"]),
            Err(DatasetError::LabelOutOfDomain { index: 0, value: 3 })
        );
        let bad = ScoredSample::new(0.5, 1, "a").with_features(vec![Some(1.0)]);
        assert!(matches!(
            ClusteredDataset::from_samples(vec![], [bad]),
            Err(DatasetError::FeatureArity { .. })
        ));
    }

    #[test]
    fn partial_probabilities_are_dropped() {
        let samples = vec![
            ScoredSample::new(0.2, 0, "a").with_probability(0.2),
            ScoredSample::new(0.7, 1, "b"),
        ];
        let ds = ClusteredDataset::from_samples(vec![], samples).unwrap();
        assert!(!ds.has_probabilities());
        assert!(ds.pooled_probabilities().is_none());
    }

    #[test]
    fn merge_and_reorder() {
        let ds = toy();
        let m = ds.merged("all");
        assert_eq!(m.num_clusters(), 1);
        assert_eq!(m.clusters()[0].positives, 3);
        assert_eq!(m.pooled(), ds.pooled());

        let r = ds.reordered(&[1, 0]).unwrap();
        assert_eq!(r.cluster_ids()[0], ClusterId::from("C2"));
        assert!(ds.reordered(&[0, 0]).is_err());
        assert!(ds.reordered(&[0]).is_err());
    }
}
