//! Machine-readable diagnostics reports and their on-disk bundle.
//!
//! Reports are plain serde structures so that writing and re-reading a
//! `report.json` reproduces every number bit for bit. Undefined AUC cells
//! are `null` in JSON and empty cells in the matrix CSVs.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ClusterId;
use crate::decomposition::{
    decompose_additive, decompose_auc, demonstrate_non_additivity, worst_cluster,
    AdditiveDecomposition, AdditiveMetric, AucDecomposition, ClusterMetric, DecompositionError,
    NonAdditivity, WorstCriterion,
};
use crate::drift::{drift_report, BinStrategy, DriftConfig, DriftError, DriftReport};
use crate::ingest::{IngestSummary, Ingested, RejectedRow};
use crate::metrics::{TiePolicy, DEFAULT_CLAMP_EPS};
use crate::svg;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot serialize report: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which per-cluster statistic selects the cluster to explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusCriterion {
    /// Lowest within-cluster AUC.
    #[default]
    Auc,
    /// Highest per-cluster Brier score.
    Brier,
    /// Highest per-cluster log loss.
    LogLoss,
}

/// Every setting that influenced a report, echoed verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub score_column: String,
    pub label_column: String,
    pub cluster_column: Option<String>,
    pub probability_column: Option<String>,
    pub feature_columns: Option<Vec<String>>,
    pub tie_policy: TiePolicy,
    pub num_bins: usize,
    pub bin_strategy: BinStrategy,
    pub smoothing: f64,
    pub categorical: Vec<String>,
    pub clamp_eps: f64,
    pub criterion: FocusCriterion,
    pub focus_cluster: Option<ClusterId>,
    pub seed: Option<u64>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        let drift = DriftConfig::default();
        ReportConfig {
            score_column: "score".into(),
            label_column: "label".into(),
            cluster_column: None,
            probability_column: None,
            feature_columns: None,
            tie_policy: TiePolicy::HalfCredit,
            num_bins: drift.num_bins,
            bin_strategy: drift.strategy,
            smoothing: drift.smoothing,
            categorical: drift.categorical,
            clamp_eps: DEFAULT_CLAMP_EPS,
            criterion: FocusCriterion::Auc,
            focus_cluster: None,
            seed: None,
        }
    }
}

impl ReportConfig {
    pub fn drift_config(&self) -> DriftConfig {
        DriftConfig {
            num_bins: self.num_bins,
            strategy: self.bin_strategy,
            smoothing: self.smoothing,
            categorical: self.categorical.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCounts {
    pub cluster: ClusterId,
    pub n: usize,
    pub positives: u64,
    pub negatives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub positives: u64,
    pub negatives: u64,
    pub clusters: usize,
    pub per_cluster: Vec<ClusterCounts>,
    pub file_rows: usize,
    pub rejected_rows: Vec<RejectedRow>,
    pub feature_columns: Vec<String>,
    pub probability_source: Option<crate::ingest::ProbabilitySource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucSection {
    pub clusters: Vec<ClusterId>,
    pub pos_counts: Vec<u64>,
    pub neg_counts: Vec<u64>,
    pub weights: Vec<Vec<f64>>,
    pub matrix: Vec<Vec<Option<f64>>>,
    pub global: f64,
    pub intra_total: f64,
    pub inter_total: f64,
    pub residual: f64,
    pub weight_sum: f64,
    pub tie_policy: TiePolicy,
}

impl From<&AucDecomposition<f64>> for AucSection {
    fn from(d: &AucDecomposition<f64>) -> Self {
        AucSection {
            clusters: d.clusters.clone(),
            pos_counts: d.pos_counts.clone(),
            neg_counts: d.neg_counts.clone(),
            weights: d.weights.clone(),
            matrix: d.auc_matrix.clone(),
            global: d.global_auc,
            intra_total: d.intra_total,
            inter_total: d.inter_total,
            residual: d.residual,
            weight_sum: d.weight_sum(),
            tie_policy: d.tie_policy,
        }
    }
}

impl AucSection {
    pub fn diagonal(&self) -> Vec<(ClusterId, Option<f64>)> {
        self.clusters
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), self.matrix[i][i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveSection {
    pub metric: AdditiveMetric,
    pub per_cluster: Vec<ClusterMetric<f64>>,
    pub global: f64,
    pub weighted_total: f64,
    pub clamped: usize,
}

impl From<&AdditiveDecomposition<f64>> for AdditiveSection {
    fn from(d: &AdditiveDecomposition<f64>) -> Self {
        AdditiveSection {
            metric: d.metric,
            per_cluster: d.per_cluster.clone(),
            global: d.global_value,
            weighted_total: d.weighted_total(),
            clamped: d.clamped,
        }
    }
}

impl AdditiveSection {
    pub fn values(&self) -> Vec<(ClusterId, Option<f64>)> {
        self.per_cluster
            .iter()
            .map(|c| (c.cluster.clone(), Some(c.value)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstClusters {
    pub min_diagonal_auc: Option<ClusterId>,
    pub max_brier: Option<ClusterId>,
    pub max_log_loss: Option<ClusterId>,
}

impl WorstClusters {
    pub fn for_criterion(&self, criterion: FocusCriterion) -> Option<&ClusterId> {
        match criterion {
            FocusCriterion::Auc => self.min_diagonal_auc.as_ref(),
            FocusCriterion::Brier => self.max_brier.as_ref(),
            FocusCriterion::LogLoss => self.max_log_loss.as_ref(),
        }
    }
}

/// Qualitative properties of the three metrics, for readers of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricProperties {
    pub metric: String,
    pub additive: bool,
    pub measures: String,
    pub pairwise: bool,
}

fn metric_properties() -> Vec<MetricProperties> {
    [
        ("auc", false, "ranking", true),
        ("brier", true, "calibration", false),
        ("log_loss", true, "likelihood", false),
    ]
    .into_iter()
    .map(|(m, additive, measures, pairwise)| MetricProperties {
        metric: m.into(),
        additive,
        measures: measures.into(),
        pairwise,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dataset: DatasetSummary,
    pub auc_decomposition: AucSection,
    pub non_additivity: Option<NonAdditivity<f64>>,
    pub brier: Option<AdditiveSection>,
    pub log_loss: Option<AdditiveSection>,
    pub worst_clusters: WorstClusters,
    pub drift: Option<DriftReport<f64>>,
    pub metric_properties: Vec<MetricProperties>,
    pub config: ReportConfig,
    pub input_digest: String,
    pub version: String,
}

fn dataset_summary(ing: &Ingested) -> DatasetSummary {
    let ds = &ing.dataset;
    let IngestSummary {
        file_rows,
        rejected,
        feature_columns,
        probability_source,
        ..
    } = ing.summary.clone();
    DatasetSummary {
        n: ds.len(),
        positives: ds.total_positives(),
        negatives: ds.total_negatives(),
        clusters: ds.num_clusters(),
        per_cluster: ds
            .clusters()
            .iter()
            .map(|c| ClusterCounts {
                cluster: c.id.clone(),
                n: c.len(),
                positives: c.positives,
                negatives: c.negatives,
            })
            .collect(),
        file_rows,
        rejected_rows: rejected,
        feature_columns,
        probability_source,
    }
}

/// Runs every analysis on an ingested dataset.
///
/// Probability metrics are omitted when the data carries no probabilities.
/// Drift is included when the data has features, at least two clusters and
/// a focus cluster can be chosen.
pub fn build_report(ing: &Ingested, config: &ReportConfig) -> Result<DiagnosticsReport, ReportError> {
    let ds = &ing.dataset;
    let decomposition: AucDecomposition<f64> = decompose_auc(ds, config.tie_policy)?;
    let non_additivity = match demonstrate_non_additivity(ds, config.tie_policy) {
        Ok(n) => Some(n),
        Err(DecompositionError::NoDefinedValue) => None,
        Err(e) => return Err(e.into()),
    };

    let additive = |metric| match decompose_additive(ds, metric, config.clamp_eps) {
        Ok(d) => Ok(Some(d)),
        Err(DecompositionError::MissingProbabilities) => Ok(None),
        Err(e) => Err(e),
    };
    let brier = additive(AdditiveMetric::Brier)?;
    let log_loss = additive(AdditiveMetric::LogLoss)?;

    let worst_clusters = WorstClusters {
        min_diagonal_auc: worst_cluster(&decomposition, WorstCriterion::MinDiagonalAuc).ok(),
        max_brier: brier
            .as_ref()
            .and_then(|b| worst_cluster(b, WorstCriterion::MaxMetric).ok()),
        max_log_loss: log_loss
            .as_ref()
            .and_then(|l| worst_cluster(l, WorstCriterion::MaxMetric).ok()),
    };

    let focus = config
        .focus_cluster
        .clone()
        .or_else(|| worst_clusters.for_criterion(config.criterion).cloned());
    let drift = match focus {
        Some(f) if !ds.feature_names().is_empty() && ds.num_clusters() > 1 => {
            Some(drift_report(ds, &f, &config.drift_config())?)
        }
        _ => None,
    };

    Ok(DiagnosticsReport {
        dataset: dataset_summary(ing),
        auc_decomposition: AucSection::from(&decomposition),
        non_additivity,
        brier: brier.as_ref().map(AdditiveSection::from),
        log_loss: log_loss.as_ref().map(AdditiveSection::from),
        worst_clusters,
        drift,
        metric_properties: metric_properties(),
        config: config.clone(),
        input_digest: format!("sha256:{}", ing.digest),
        version: VERSION.to_owned(),
    })
}

/// Standalone drift output for an explicitly chosen focus cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftDocument {
    pub focus_cluster: ClusterId,
    pub criterion: Option<FocusCriterion>,
    pub report: DriftReport<f64>,
    pub config: ReportConfig,
    pub input_digest: String,
    pub version: String,
}

/// Picks the focus cluster (override or worst by criterion) and explains it.
///
/// Features in the returned report are sorted by descending PSI.
pub fn build_drift(ing: &Ingested, config: &ReportConfig) -> Result<DriftDocument, ReportError> {
    let ds = &ing.dataset;
    if ds.num_clusters() < 2 {
        return Err(DriftError::EmptyComplement.into());
    }
    let (focus, criterion) = match &config.focus_cluster {
        Some(f) => (f.clone(), None),
        None => {
            let focus = match config.criterion {
                FocusCriterion::Auc => {
                    let d: AucDecomposition<f64> = decompose_auc(ds, config.tie_policy)?;
                    worst_cluster(&d, WorstCriterion::MinDiagonalAuc)?
                }
                FocusCriterion::Brier | FocusCriterion::LogLoss => {
                    let metric = if config.criterion == FocusCriterion::Brier {
                        AdditiveMetric::Brier
                    } else {
                        AdditiveMetric::LogLoss
                    };
                    let d = decompose_additive(ds, metric, config.clamp_eps)?;
                    worst_cluster(&d, WorstCriterion::MaxMetric)?
                }
            };
            (focus, Some(config.criterion))
        }
    };
    let mut report = drift_report(ds, &focus, &config.drift_config())?;
    report.per_feature = report.sorted_by_psi().into_iter().cloned().collect();
    Ok(DriftDocument {
        focus_cluster: focus,
        criterion,
        report,
        config: config.clone(),
        input_digest: format!("sha256:{}", ing.digest),
        version: VERSION.to_owned(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvMatrices,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Square matrix as CSV with cluster ids heading both rows and columns.
pub fn matrix_csv(labels: &[ClusterId], rows: &[Vec<Option<f64>>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["cluster".to_owned()];
    head.extend(labels.iter().map(|l| l.0.clone()));
    // Writing to a Vec cannot fail.
    w.write_record(&head).expect("in-memory write");
    for (label, row) in labels.iter().zip(rows) {
        let mut rec = vec![label.0.clone()];
        rec.extend(row.iter().map(|v| v.map_or_else(String::new, |x| format!("{x:?}"))));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Writes `report.json` or the two matrix CSVs into `dir`.
pub fn emit_report(
    report: &DiagnosticsReport,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let auc = &report.auc_decomposition;
    match format {
        ReportFormat::Json => Ok(vec![write_file(dir, "report.json", &to_json(report)?)?]),
        ReportFormat::CsvMatrices => {
            let weights: Vec<Vec<Option<f64>>> = auc
                .weights
                .iter()
                .map(|r| r.iter().copied().map(Some).collect())
                .collect();
            Ok(vec![
                write_file(dir, "weights.csv", &matrix_csv(&auc.clusters, &weights))?,
                write_file(dir, "auc_matrix.csv", &matrix_csv(&auc.clusters, &auc.matrix))?,
            ])
        }
    }
}

/// The full decompose output: report, matrices, heatmap and per-cluster charts.
pub fn write_decompose_bundle(
    report: &DiagnosticsReport,
    dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let auc = &report.auc_decomposition;
    let mut written = emit_report(report, ReportFormat::Json, dir)?;
    written.extend(emit_report(report, ReportFormat::CsvMatrices, dir)?);
    written.push(write_file(
        dir,
        "heatmap.svg",
        &svg::render_heatmap(&auc.matrix, &auc.weights, &auc.clusters),
    )?);
    written.push(write_file(
        dir,
        "cluster_auc.svg",
        &svg::render_cluster_bars(&auc.diagonal(), "AUC", Some(auc.global)),
    )?);
    if let Some(brier) = &report.brier {
        written.push(write_file(
            dir,
            "cluster_brier.svg",
            &svg::render_cluster_bars(&brier.values(), "Brier score", Some(brier.global)),
        )?);
    }
    Ok(written)
}

/// Writes `drift.json` and `psi_bars.svg` into `dir`.
pub fn write_drift_bundle(doc: &DriftDocument, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let items: Vec<(String, Option<f64>)> = doc
        .report
        .per_feature
        .iter()
        .map(|f| (f.feature.clone(), Some(f.psi)))
        .collect();
    let title = format!("PSI of cluster {} vs the rest", doc.focus_cluster);
    Ok(vec![
        write_file(dir, "drift.json", &to_json(doc)?)?,
        write_file(
            dir,
            "psi_bars.svg",
            &svg::render_bars(&title, "Feature", "PSI", &items, None),
        )?,
    ])
}
