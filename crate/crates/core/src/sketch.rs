//! Distribution summaries of data batches and distances between them.
//!
//! A [`GaussianSketch`] is a diagonal Gaussian fitted to a batch: per-column
//! mean and population standard deviation plus the sample count. Its size is
//! O(d) regardless of batch size, and two sketches compare in closed form via
//! the 2-Wasserstein distance between axis-aligned Gaussians:
//!
//! ```text
//! W2(a, b)^2 = ||mean_a - mean_b||^2 + ||std_a - std_b||^2
//! ```
//!
//! Label marginals are tracked separately as a [`LabelHistogram`] and compared
//! with total variation distance.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Tolerance used for histogram normalization and sketch equality checks.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSketch {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub count: u64,
}

impl GaussianSketch {
    /// Builds a sketch from explicit moments, validating the invariants.
    pub fn new(mean: Vec<f64>, std: Vec<f64>, count: u64) -> Result<Self> {
        if mean.is_empty() {
            return Err(CoreError::EmptyBatch);
        }
        if mean.len() != std.len() {
            return Err(CoreError::DimensionMismatch { expected: mean.len(), got: std.len() });
        }
        if count == 0 || std.iter().any(|s| s.is_nan() || *s < 0.0) {
            return Err(CoreError::InvalidHistogram("sketch needs count >= 1 and nonnegative std".into()));
        }
        Ok(Self { mean, std, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// True when both moment vectors agree within [`EPS`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self.mean.iter().zip(&other.mean).all(|(a, b)| (a - b).abs() <= EPS)
            && self.std.iter().zip(&other.std).all(|(a, b)| (a - b).abs() <= EPS)
    }
}

/// Checks that `samples` is a nonempty rectangular matrix and returns its width.
pub(crate) fn matrix_dim(samples: &[Vec<f64>]) -> Result<usize> {
    let first = samples.first().ok_or(CoreError::EmptyBatch)?;
    let d = first.len();
    if d == 0 {
        return Err(CoreError::EmptyBatch);
    }
    for (row, x) in samples.iter().enumerate() {
        if x.len() != d {
            return Err(CoreError::RaggedSamples { row, expected: d, got: x.len() });
        }
    }
    Ok(d)
}

/// Column means and population standard deviations of an n×d matrix.
pub fn sketch_from_samples(samples: &[Vec<f64>]) -> Result<GaussianSketch> {
    let d = matrix_dim(samples)?;
    let n = samples.len();
    // Welford per column.
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];
    for (k, x) in samples.iter().enumerate() {
        let seen = (k + 1) as f64;
        for j in 0..d {
            let delta = x[j] - mean[j];
            mean[j] += delta / seen;
            m2[j] += delta * (x[j] - mean[j]);
        }
    }
    let std = m2.iter().map(|v| (v.max(0.0) / n as f64).sqrt()).collect();
    Ok(GaussianSketch { mean, std, count: n as u64 })
}

/// Exact pooled mean and population variance of two summarized sample sets.
pub fn merge_sketches(a: &GaussianSketch, b: &GaussianSketch) -> Result<GaussianSketch> {
    if a.dim() != b.dim() {
        return Err(CoreError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let (na, nb) = (a.count as f64, b.count as f64);
    let n = na + nb;
    let mut mean = Vec::with_capacity(a.dim());
    let mut std = Vec::with_capacity(a.dim());
    for j in 0..a.dim() {
        let delta = b.mean[j] - a.mean[j];
        let m = a.mean[j] + delta * nb / n;
        // Pooled sum of squared deviations (Chan et al. parallel update).
        let m2 = a.std[j].powi(2) * na + b.std[j].powi(2) * nb + delta * delta * na * nb / n;
        mean.push(m);
        std.push((m2.max(0.0) / n).sqrt());
    }
    Ok(GaussianSketch { mean, std, count: a.count + b.count })
}

/// Folds [`merge_sketches`] over a nonempty sequence.
pub fn merge_all<'a>(sketches: impl IntoIterator<Item = &'a GaussianSketch>) -> Result<Option<GaussianSketch>> {
    let mut acc: Option<GaussianSketch> = None;
    for s in sketches {
        acc = Some(match acc {
            None => s.clone(),
            Some(prev) => merge_sketches(&prev, s)?,
        });
    }
    Ok(acc)
}

/// Closed-form 2-Wasserstein distance between two axis-aligned Gaussians.
pub fn w2_distance(a: &GaussianSketch, b: &GaussianSketch) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(CoreError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let mean_sq: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).powi(2)).sum();
    let std_sq: f64 = a.std.iter().zip(&b.std).map(|(x, y)| (x - y).powi(2)).sum();
    Ok((mean_sq + std_sq).sqrt())
}

/// Empirical class distribution. For binary {-1,+1} labels the order is
/// `[P(-1), P(+1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelHistogram {
    pub probs: Vec<f64>,
}

impl LabelHistogram {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CoreError::InvalidHistogram("no classes".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CoreError::InvalidHistogram("probability outside [0,1]".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > EPS {
            return Err(CoreError::InvalidHistogram(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// Histogram of binary labels.
    pub fn from_labels(labels: &[i8]) -> Result<Self> {
        if labels.is_empty() {
            return Err(CoreError::EmptyBatch);
        }
        let mut pos = 0usize;
        for &y in labels {
            match y {
                1 => pos += 1,
                -1 => {}
                other => return Err(CoreError::InvalidLabel(other)),
            }
        }
        let p = pos as f64 / labels.len() as f64;
        Ok(Self { probs: vec![1.0 - p, p] })
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }
}

/// Total variation distance, half the L1 distance between histograms.
pub fn tv_distance(p: &LabelHistogram, q: &LabelHistogram) -> Result<f64> {
    if p.classes() != q.classes() {
        return Err(CoreError::DimensionMismatch { expected: p.classes(), got: q.classes() });
    }
    let l1: f64 = p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).clamp(0.0, 1.0))
}
