//! Delimited-file ingestion into a [`ClusteredDataset`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{ClusterId, ClusteredDataset, DatasetError, ScoredSample};

/// Cluster id given to every row when no cluster column is configured.
pub const DEFAULT_CLUSTER: &str = "all";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("input has no header row")]
    MissingHeader,
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cannot parse {value:?}")]
    ParseError {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label {value:?} is not 0/1/true/false")]
    LabelOutOfDomain { row: usize, value: String },
    #[error("row {row}: score is not finite")]
    NonFiniteScore { row: usize },
    #[error("row {row}: probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange { row: usize, value: f64 },
    #[error("no rows left after rejecting incomplete records")]
    EmptyAfterFiltering,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// Which columns to read and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub delimiter: u8,
    pub score_column: String,
    pub label_column: String,
    pub cluster_column: Option<String>,
    /// Defaults to the score column when every score lies in `[0, 1]`.
    pub probability_column: Option<String>,
    /// Defaults to every remaining column whose values are all numeric.
    pub feature_columns: Option<Vec<String>>,
}

impl IngestSpec {
    pub fn new(path: impl Into<PathBuf>, score_column: &str, label_column: &str) -> Self {
        IngestSpec {
            path: path.into(),
            delimiter: b',',
            score_column: score_column.to_owned(),
            label_column: label_column.to_owned(),
            cluster_column: None,
            probability_column: None,
            feature_columns: None,
        }
    }

    pub fn with_cluster_column(mut self, column: &str) -> Self {
        self.cluster_column = Some(column.to_owned());
        self
    }
}

/// A delimited file held in memory with its header.
#[derive(Debug, Clone)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Hex SHA-256 of the raw file bytes.
    pub digest: String,
}

impl Table {
    pub fn read(path: &Path, delimiter: u8) -> Result<Self, IngestError> {
        let bytes = std::fs::read(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                IngestError::FileNotFound(path.to_owned())
            } else {
                IngestError::Io {
                    path: path.to_owned(),
                    source,
                }
            }
        })?;
        Self::from_bytes(&bytes, delimiter)
    }

    pub fn from_bytes(bytes: &[u8], delimiter: u8) -> Result<Self, IngestError> {
        let digest = hex::encode(Sha256::digest(bytes));
        let body = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
        std::str::from_utf8(body).map_err(|_| IngestError::NotUtf8)?;

        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .has_headers(true)
            .from_reader(body);
        let headers: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_owned())
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(IngestError::MissingHeader);
        }
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        Ok(Table {
            headers,
            rows,
            digest,
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, IngestError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_owned()))
    }

    /// Columns whose non-missing values all parse as finite numbers.
    pub fn numeric_columns(&self) -> Vec<usize> {
        (0..self.headers.len())
            .filter(|&c| {
                let mut seen = false;
                let all_numeric = self.rows.iter().all(|r| match r.get(c).map(|s| s.trim()) {
                    None => true,
                    Some(v) if is_missing(v) => true,
                    Some(v) => {
                        seen = true;
                        v.parse::<f64>().map(f64::is_finite).unwrap_or(false)
                    }
                });
                all_numeric && seen
            })
            .collect()
    }
}

pub(crate) fn is_missing(value: &str) -> bool {
    matches!(value, "" | "NA" | "N/A" | "na" | "null" | "NULL")
}

fn parse_label(value: &str) -> Option<Result<u8, ()>> {
    match value.to_ascii_lowercase().as_str() {
        "0" | "false" => Some(Ok(0)),
        "1" | "true" => Some(Ok(1)),
        other => match other.parse::<f64>() {
            Ok(0.0) => Some(Ok(0)),
            Ok(1.0) => Some(Ok(1)),
            Ok(_) => Some(Err(())),
            Err(_) => None,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based data row number (the header is not counted).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilitySource {
    ProbabilityColumn,
    ScoreColumn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub file_rows: usize,
    pub accepted: usize,
    pub rejected: Vec<RejectedRow>,
    pub feature_columns: Vec<String>,
    pub probability_source: Option<ProbabilitySource>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: ClusteredDataset<f64>,
    pub summary: IngestSummary,
    pub digest: String,
}

/// Reads and validates the file named by `spec`.
pub fn ingest(spec: &IngestSpec) -> Result<Ingested, IngestError> {
    let table = Table::read(&spec.path, spec.delimiter)?;
    ingest_table(spec, &table)
}

pub fn ingest_table(spec: &IngestSpec, table: &Table) -> Result<Ingested, IngestError> {
    let score_col = table.column(&spec.score_column)?;
    let label_col = table.column(&spec.label_column)?;
    let cluster_col = spec
        .cluster_column
        .as_deref()
        .map(|c| table.column(c))
        .transpose()?;
    let prob_col = spec
        .probability_column
        .as_deref()
        .map(|c| table.column(c))
        .transpose()?;

    let reserved = [Some(score_col), Some(label_col), cluster_col, prob_col];
    let feature_cols: Vec<usize> = match &spec.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| table.column(n))
            .collect::<Result<_, _>>()?,
        None => table
            .numeric_columns()
            .into_iter()
            .filter(|c| !reserved.contains(&Some(*c)))
            .collect(),
    };
    let feature_names: Vec<String> = feature_cols
        .iter()
        .map(|&c| table.headers[c].clone())
        .collect();

    let mut rejected = Vec::new();
    let mut samples = Vec::with_capacity(table.rows.len());
    for (i, record) in table.rows.iter().enumerate() {
        let row = i + 1;
        let cell = |c: usize| record.get(c).map_or("", |s| s.trim());
        let parse_num = |c: usize| -> Result<Option<f64>, IngestError> {
            let v = cell(c);
            if is_missing(v) {
                return Ok(None);
            }
            v.parse::<f64>()
                .map(Some)
                .map_err(|_| IngestError::ParseError {
                    row,
                    column: table.headers[c].clone(),
                    value: v.to_owned(),
                })
        };

        let Some(score) = parse_num(score_col)? else {
            rejected.push(RejectedRow {
                row,
                reason: format!("missing {}", spec.score_column),
            });
            continue;
        };
        if !score.is_finite() {
            return Err(IngestError::NonFiniteScore { row });
        }
        let raw_label = cell(label_col);
        if is_missing(raw_label) {
            rejected.push(RejectedRow {
                row,
                reason: format!("missing {}", spec.label_column),
            });
            continue;
        }
        let label = match parse_label(raw_label) {
            Some(Ok(y)) => y,
            Some(Err(())) => {
                return Err(IngestError::LabelOutOfDomain {
                    row,
                    value: raw_label.to_owned(),
                })
            }
            None => {
                return Err(IngestError::ParseError {
                    row,
                    column: spec.label_column.clone(),
                    value: raw_label.to_owned(),
                })
            }
        };
        let probability = match prob_col {
            Some(c) => match parse_num(c)? {
                Some(p) if (0.0..=1.0).contains(&p) => Some(p),
                Some(p) => return Err(IngestError::ProbabilityOutOfRange { row, value: p }),
                None => {
                    rejected.push(RejectedRow {
                        row,
                        reason: format!("missing {}", table.headers[c]),
                    });
                    continue;
                }
            },
            None => None,
        };
        let cluster = match cluster_col {
            Some(c) => {
                let id = cell(c);
                if id.is_empty() {
                    rejected.push(RejectedRow {
                        row,
                        reason: format!("missing {}", table.headers[c]),
                    });
                    continue;
                }
                ClusterId::new(id)
            }
            None => ClusterId::new(DEFAULT_CLUSTER),
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let v = parse_num(c)?;
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(IngestError::ParseError {
                    row,
                    column: table.headers[c].clone(),
                    value: cell(c).to_owned(),
                });
            }
            features.push(v);
        }
        samples.push(ScoredSample {
            score,
            label,
            cluster,
            probability,
            features,
        });
    }

    if samples.is_empty() {
        return Err(IngestError::EmptyAfterFiltering);
    }

    let probability_source = if prob_col.is_some() {
        Some(ProbabilitySource::ProbabilityColumn)
    } else if samples.iter().all(|s| (0.0..=1.0).contains(&s.score)) {
        for s in &mut samples {
            s.probability = Some(s.score);
        }
        Some(ProbabilitySource::ScoreColumn)
    } else {
        None
    };

    let accepted = samples.len();
    let dataset = ClusteredDataset::from_samples(feature_names.clone(), samples)?;
    Ok(Ingested {
        dataset,
        summary: IngestSummary {
            file_rows: table.rows.len(),
            accepted,
            rejected,
            feature_columns: feature_names,
            probability_source,
        },
        digest: table.digest.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "cluster,label,score\nC1,1,0.9\nC1,1,0.8\nC1,0,0.4\nC2,1,0.6\nC2,0,0.7\nC2,0,0.3\n";

    fn spec() -> IngestSpec {
        IngestSpec::new("mem.csv", "score", "label").with_cluster_column("cluster")
    }

    fn load(text: &str, spec: &IngestSpec) -> Result<Ingested, IngestError> {
        ingest_table(spec, &Table::from_bytes(text.as_bytes(), b',')?)
    }

    #[test]
    fn toy_table() {
        let ing = load(TOY, &spec()).unwrap();
        let ds = &ing.dataset;
        assert_eq!(ds.num_clusters(), 2);
        assert_eq!(ds.total_positives(), 3);
        assert_eq!(ds.total_negatives(), 3);
        assert_eq!(ing.summary.probability_source, Some(ProbabilitySource::ScoreColumn));
        assert!(ds.has_probabilities());
        assert_eq!(ing.digest.len(), 64);
        assert!(ing.summary.feature_columns.is_empty());
    }

    #[test]
    fn label_out_of_domain_reports_row() {
        let text = "cluster,label,score\nC1,1,0.9\nC1,0,0.8\nC1,0,0.4\nC2,2,0.6\n";
        match load(text, &spec()) {
            Err(IngestError::LabelOutOfDomain { row, value }) => {
                assert_eq!(row, 4);
                assert_eq!(value, "2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn default_single_cluster() {
        let ing = load(TOY, &IngestSpec::new("mem.csv", "score", "label")).unwrap();
        assert_eq!(ing.dataset.num_clusters(), 1);
        assert_eq!(ing.dataset.cluster_ids(), vec![ClusterId::from("all")]);
    }

    #[test]
    fn boolean_labels_and_missing_rows() {
        let text = "label,score,f\ntrue,0.9,1.5\nfalse,0.1,\n,0.3,2\n1,,3\n";
        let ing = load(text, &IngestSpec::new("m", "score", "label")).unwrap();
        assert_eq!(ing.summary.file_rows, 4);
        assert_eq!(ing.summary.accepted, 2);
        assert_eq!(
            ing.summary.rejected.iter().map(|r| r.row).collect::<Vec<_>>(),
            vec![3, 4]
        );
        assert_eq!(ing.summary.feature_columns, vec!["f".to_string()]);
        let c = &ing.dataset.clusters()[0];
        assert_eq!(c.features[0], vec![Some(1.5), None]);
    }

    #[test]
    fn non_numeric_columns_are_not_features() {
        let text = "label,score,name,x\n1,0.9,a,1\n0,0.1,b,2\n";
        let ing = load(text, &IngestSpec::new("m", "score", "label")).unwrap();
        assert_eq!(ing.summary.feature_columns, vec!["x".to_string()]);
    }

    #[test]
    fn scores_outside_unit_interval_have_no_probabilities() {
        let text = "label,score\n1,2.5\n0,-1\n";
        let ing = load(text, &IngestSpec::new("m", "score", "label")).unwrap();
        assert_eq!(ing.summary.probability_source, None);
        assert!(!ing.dataset.has_probabilities());
    }

    #[test]
    fn bad_values() {
        let s = IngestSpec::new("m", "score", "label");
        assert!(matches!(
            load("label,score\n1,abc\n", &s),
            Err(IngestError::ParseError { row: 1, .. })
        ));
        assert!(matches!(
            load("label,score\n1,inf\n", &s),
            Err(IngestError::NonFiniteScore { row: 1 })
        ));
        assert!(matches!(
            load("label,score\nyes,0.2\n", &s),
            Err(IngestError::ParseError { row: 1, .. })
        ));
        assert!(matches!(
            load("label,p\n1,0.2\n", &s),
            Err(IngestError::MissingColumn(c)) if c == "score"
        ));
        assert!(matches!(
            load("label,score\n,0.2\n", &s),
            Err(IngestError::EmptyAfterFiltering)
        ));
        let mut with_prob = s.clone();
        with_prob.probability_column = Some("p".into());
        assert!(matches!(
            load("label,score,p\n1,3.0,1.2\n", &with_prob),
            Err(IngestError::ProbabilityOutOfRange { row: 1, .. })
        ));
    }

    #[test]
    fn missing_file() {
        let s = IngestSpec::new("/nonexistent/x.csv", "score", "label");
        assert!(matches!(ingest(&s), Err(IngestError::FileNotFound(_))));
    }

    #[test]
    fn delimiter_and_bom() {
        let text = "\u{feff}label;score\n1;0.9\n0;0.2\n";
        let mut s = IngestSpec::new("m", "score", "label");
        s.delimiter = b';';
        let table = Table::from_bytes(text.as_bytes(), b';').unwrap();
        let ing = ingest_table(&s, &table).unwrap();
        assert_eq!(ing.summary.accepted, 2);
    }
}
