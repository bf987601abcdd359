//! Seeded k-means for datasets that arrive without cluster assignments.
//!
//! Features are standardized, seeded with k-means++ and refined with Lloyd
//! iterations. The same inputs and seed always give the same model.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::metrics::count_as;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KMeansError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("max_iter must be at least 1")]
    InvalidMaxIter,
    #[error("{n} samples cannot form {k} clusters")]
    TooFewSamples { n: usize, k: usize },
    #[error("row {row}, column {column}: feature value is not finite")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("every feature column is constant")]
    DegenerateFeatures,
    #[error("expected {expected} feature columns, got {got} (row {row})")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Standardization<T> {
    pub mean: T,
    pub stddev: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansModel<T> {
    /// Centroids in standardized space, one row per cluster.
    pub centroids: Vec<Vec<T>>,
    /// Names of the columns the model uses.
    pub feature_names: Vec<String>,
    /// Positions of the used columns within the input rows.
    pub kept_columns: Vec<usize>,
    /// Width of the input rows.
    pub input_dim: usize,
    pub standardization: Vec<Standardization<T>>,
    pub iterations_run: usize,
    pub inertia: T,
    /// Inertia after every assignment step, ending with the final one.
    pub inertia_history: Vec<T>,
    pub seed: u64,
}

impl<T: Float> KMeansModel<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    fn standardize(&self, row: &[T]) -> Vec<T> {
        self.kept_columns
            .iter()
            .zip(&self.standardization)
            .map(|(&c, s)| (row[c] - s.mean) / s.stddev)
            .collect()
    }
}

fn sq_dist<T: Float>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

/// Index and squared distance of the nearest centroid; ties go to the lowest index.
fn nearest<T: Float>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(point, &centroids[0]));
    for (i, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn validate_rows<T: Float>(rows: &[Vec<T>], width: usize) -> Result<(), KMeansError> {
    for (row, values) in rows.iter().enumerate() {
        if values.len() != width {
            return Err(KMeansError::DimensionMismatch {
                row,
                expected: width,
                got: values.len(),
            });
        }
        if let Some(column) = values.iter().position(|v| !v.is_finite()) {
            return Err(KMeansError::NonFiniteFeature { row, column });
        }
    }
    Ok(())
}

fn plus_plus_seeds<T: Float>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<T>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p, &centroids[0]).to_f64().unwrap_or(0.0))
        .collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the final partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"))
        } else {
            chosen.iter().position(|&c| !c).expect("n >= k")
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        let c = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c).to_f64().unwrap_or(0.0));
        }
    }
    centroids
}

fn assign_all<T: Float>(points: &[Vec<T>], centroids: &[Vec<T>]) -> (Vec<usize>, Vec<T>, T) {
    let mut labels = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    let mut inertia = T::zero();
    for p in points {
        let (i, d) = nearest(p, centroids);
        labels.push(i);
        dists.push(d);
        inertia = inertia + d;
    }
    (labels, dists, inertia)
}

/// Fits `k` clusters to `rows` (N x D). Returns the model and the cluster of every row.
pub fn kmeans_fit<T: Float>(
    rows: &[Vec<T>],
    feature_names: &[String],
    k: usize,
    max_iter: usize,
    seed: u64,
) -> Result<(KMeansModel<T>, Vec<usize>), KMeansError> {
    if k == 0 {
        return Err(KMeansError::InvalidK);
    }
    if max_iter == 0 {
        return Err(KMeansError::InvalidMaxIter);
    }
    let n = rows.len();
    if n < k {
        return Err(KMeansError::TooFewSamples { n, k });
    }
    let width = rows[0].len();
    validate_rows(rows, width)?;

    let nf = count_as::<T>(n);
    let mut kept_columns = Vec::new();
    let mut standardization = Vec::new();
    for c in 0..width {
        let mean = rows.iter().fold(T::zero(), |a, r| a + r[c]) / nf;
        let var = rows
            .iter()
            .fold(T::zero(), |a, r| a + (r[c] - mean) * (r[c] - mean))
            / nf;
        let stddev = var.sqrt();
        if stddev > T::zero() {
            kept_columns.push(c);
            standardization.push(Standardization { mean, stddev });
        } else {
            let name = feature_names.get(c).map_or("?", String::as_str);
            log::warn!("dropping constant feature column {c} ({name}) from clustering");
        }
    }
    if kept_columns.is_empty() {
        return Err(KMeansError::DegenerateFeatures);
    }

    let mut model = KMeansModel {
        centroids: Vec::new(),
        feature_names: kept_columns
            .iter()
            .map(|&c| feature_names.get(c).cloned().unwrap_or_else(|| format!("f{c}")))
            .collect(),
        kept_columns,
        input_dim: width,
        standardization,
        iterations_run: 0,
        inertia: T::zero(),
        inertia_history: Vec::new(),
        seed,
    };
    let points: Vec<Vec<T>> = rows.iter().map(|r| model.standardize(r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(&points, k, &mut rng);
    let tol = T::from(CONVERGENCE_TOL).expect("representable");
    let dim = points[0].len();

    for _ in 0..max_iter {
        let (mut labels, dists, inertia) = assign_all(&points, &centroids);
        model.inertia_history.push(inertia);

        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            // Farthest point from its own centroid, from a cluster that can spare one.
            let donor = (0..n)
                .filter(|&i| !taken[i] && sizes[labels[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = donor {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                taken[i] = true;
                centroids[c] = points[i].clone();
            }
        }

        let mut sums = vec![vec![T::zero(); dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, &v) in sums[l].iter_mut().zip(p) {
                *s = *s + v;
            }
        }
        let mut movement = T::zero();
        for (c, sum) in sums.into_iter().enumerate() {
            if sizes[c] == 0 {
                continue;
            }
            let size = count_as::<T>(sizes[c]);
            let updated: Vec<T> = sum.into_iter().map(|s| s / size).collect();
            movement = movement.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        model.iterations_run += 1;
        if movement < tol {
            break;
        }
    }

    let (labels, _, inertia) = assign_all(&points, &centroids);
    model.inertia_history.push(inertia);
    model.inertia = inertia;
    model.centroids = centroids;
    Ok((model, labels))
}

/// Nearest-centroid cluster of every row, in the model's standardized space.
pub fn kmeans_assign<T: Float>(
    model: &KMeansModel<T>,
    rows: &[Vec<T>],
) -> Result<Vec<usize>, KMeansError> {
    validate_rows(rows, model.input_dim)?;
    Ok(rows
        .iter()
        .map(|r| nearest(&model.standardize(r), &model.centroids).0)
        .collect())
}
