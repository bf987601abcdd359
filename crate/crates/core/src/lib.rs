//! Cluster-level diagnostics for binary classifiers.
//!
//! The central piece is [`decompose_auc`], which splits the pooled ROC AUC
//! into a matrix of cluster-pair AUCs weighted by their share of
//! positive/negative pairs. Around it sit additive per-cluster Brier and
//! log-loss breakdowns, drift diagnostics for the worst cluster, a seeded
//! k-means for data without cluster labels, CSV ingestion and JSON/CSV/SVG
//! reporting.
//!
//! Matrices and totals are generic over [`Scalar`]. Use `f64` for everyday
//! work and [`Rational`] when the decomposition identity should hold with a
//! residual of exactly zero.

pub mod dataset;
pub mod decomposition;
pub mod drift;
pub mod ingest;
pub mod kmeans;
pub mod metrics;
pub mod report;
pub mod scalar;
pub mod svg;
pub mod synthetic;

pub use dataset::{Cluster, ClusterId, ClusteredDataset, ScoredSample};
pub use decomposition::{
    auc_matrix, decompose_additive, decompose_auc, demonstrate_non_additivity, weight_matrix,
    worst_cluster, AdditiveDecomposition, AdditiveMetric, AucDecomposition, NonAdditivity,
    WorstCriterion,
};
pub use drift::{bin_feature, drift_report, js_divergence, psi, BinStrategy, BinnedHistogram, DriftConfig, DriftReport};
pub use ingest::{ingest, IngestSpec, Ingested};
pub use kmeans::{kmeans_assign, kmeans_fit, KMeansModel};
pub use metrics::{auc, brier_score, log_loss, TiePolicy};
pub use report::{build_drift, build_report, DiagnosticsReport, DriftDocument, FocusCriterion, ReportConfig};
pub use scalar::{Rational, Scalar};

/// Dataset with double-precision scores.
pub type Dataset = ClusteredDataset<f64>;
/// Decomposition in double precision.
pub type Decomposition = AucDecomposition<f64>;
/// Decomposition in exact rational arithmetic.
pub type ExactDecomposition = AucDecomposition<Rational>;
pub type Additive = AdditiveDecomposition<f64>;
pub type Drift = DriftReport<f64>;
pub type KMeans = KMeansModel<f64>;
