//! Seeded generator of an imbalanced, fraud-like scored dataset.
//!
//! Most clusters are "healthy": low fraud rate and scores that separate the
//! classes well. One cluster is shifted. It has a higher fraud rate, higher
//! scores across the board and almost no separation, and its
//! `merchant_risk` feature is moved far from the rest. Pooled, the strong
//! cross-cluster ordering keeps the global AUC high while the shifted
//! cluster's own AUC stays near chance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ClusteredDataset, DatasetError, ScoredSample};

pub const FEATURES: [&str; 4] = ["amount", "merchant_risk", "velocity", "account_age"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub clusters: usize,
    pub seed: u64,
    /// Fraud rate in the healthy clusters.
    pub base_rate: f64,
    /// Fraud rate in the shifted cluster.
    pub shifted_rate: f64,
    /// Share of all rows that fall in the shifted cluster.
    pub shifted_share: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 20_000,
            clusters: 5,
            seed: 7,
            base_rate: 0.015,
            shifted_rate: 0.08,
            shifted_share: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRow {
    pub cluster: String,
    pub label: u8,
    pub score: f64,
    pub features: [f64; 4],
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Generates rows; the last cluster is the shifted one.
///
/// # Panics
/// If `clusters < 2` or `n == 0`.
pub fn generate(config: &SyntheticConfig) -> Vec<SyntheticRow> {
    assert!(config.clusters >= 2, "need a healthy and a shifted cluster");
    assert!(config.n > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let shifted = config.clusters - 1;

    (0..config.n)
        .map(|_| {
            let c = if rng.gen_bool(config.shifted_share) {
                shifted
            } else {
                rng.gen_range(0..shifted)
            };
            let is_shifted = c == shifted;
            let rate = if is_shifted { config.shifted_rate } else { config.base_rate };
            let label = u8::from(rng.gen_bool(rate));
            let y = f64::from(label);

            let (offset, separation) = if is_shifted { (0.5, 0.15) } else { (-4.0, 3.0) };
            let logit = offset + separation * y + 0.8 * std.sample(&mut rng);

            let amount = (3.5 + 0.1 * c as f64 + 0.6 * y + std.sample(&mut rng)).exp();
            let merchant_risk = if is_shifted { 4.0 } else { 0.0 } + std.sample(&mut rng);
            let velocity = 2.0 + y + std.sample(&mut rng).abs();
            let account_age = 36.0 + 12.0 * std.sample(&mut rng) - 6.0 * y;

            SyntheticRow {
                cluster: format!("C{}", c + 1),
                label,
                score: sigmoid(logit),
                features: [amount, merchant_risk, velocity, account_age],
            }
        })
        .collect()
}

pub fn to_dataset(rows: &[SyntheticRow]) -> Result<ClusteredDataset<f64>, DatasetError> {
    ClusteredDataset::from_samples(
        FEATURES.iter().map(|s| s.to_string()).collect(),
        rows.iter().map(|r| {
            ScoredSample::new(r.score, r.label, r.cluster.as_str())
                .with_probability(r.score)
                .with_features(r.features.iter().map(|&v| Some(v)).collect())
        }),
    )
}

/// CSV with columns `cluster,label,score` followed by the features.
pub fn to_csv(rows: &[SyntheticRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut head = vec!["cluster", "label", "score"];
    head.extend(FEATURES);
    w.write_record(&head).expect("in-memory write");
    for r in rows {
        let mut rec = vec![r.cluster.clone(), r.label.to_string(), r.score.to_string()];
        rec.extend(r.features.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}
