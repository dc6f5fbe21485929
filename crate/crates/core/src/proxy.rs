//! Linear X→Y surrogates of remote tasks.
//!
//! A [`MappingProxy`] is the d+1 numbers a client publishes so that other
//! clients can judge, without access to its model, whether their local data
//! would be informative for it. Fitting is the classic perceptron rule with
//! learning rate 1, visiting samples in index order.

use serde::{Deserialize, Serialize};

use crate::client::DataBatch;
use crate::error::{CoreError, Result};
use crate::sketch::matrix_dim;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingProxy {
    pub task_id: String,
    pub version: u64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl MappingProxy {
    /// The constant predictor `sign(bias)` over `dim` features.
    pub fn constant(task_id: impl Into<String>, dim: usize, bias: f64) -> Self {
        Self { task_id: task_id.into(), version: 0, weights: vec![0.0; dim], bias }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    fn activation(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

fn sign(a: f64) -> i8 {
    if a >= 0.0 {
        1
    } else {
        -1
    }
}

/// Fits a fresh perceptron. `previous` is the proxy being replaced, if any;
/// the result's version is one past it.
pub fn fit_proxy(
    task_id: &str,
    samples: &[Vec<f64>],
    labels: &[i8],
    max_epochs: u32,
    previous: Option<&MappingProxy>,
) -> Result<MappingProxy> {
    let d = matrix_dim(samples)?;
    if labels.len() != samples.len() {
        return Err(CoreError::LabelCountMismatch { samples: samples.len(), labels: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
        return Err(CoreError::InvalidLabel(bad));
    }
    let mut proxy = MappingProxy {
        task_id: task_id.to_owned(),
        version: previous.map_or(1, |p| p.version + 1),
        weights: vec![0.0; d],
        bias: 0.0,
    };
    for _ in 0..max_epochs {
        let mut mistakes = 0usize;
        for (x, &y) in samples.iter().zip(labels) {
            if sign(proxy.activation(x)) != y {
                let y = f64::from(y);
                for (w, v) in proxy.weights.iter_mut().zip(x) {
                    *w += y * v;
                }
                proxy.bias += y;
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            break;
        }
    }
    Ok(proxy)
}

/// `sign(weights·x + bias)` with `sign(0) = +1`.
pub fn predict_proxy(proxy: &MappingProxy, x: &[f64]) -> Result<i8> {
    if x.len() != proxy.dim() {
        return Err(CoreError::DimensionMismatch { expected: proxy.dim(), got: x.len() });
    }
    Ok(sign(proxy.activation(x)))
}

/// Fraction of `samples` whose label differs from the proxy's prediction.
pub fn disagreement(proxy: &MappingProxy, samples: &[Vec<f64>], labels: &[i8]) -> Result<f64> {
    if samples.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    if labels.len() != samples.len() {
        return Err(CoreError::LabelCountMismatch { samples: samples.len(), labels: labels.len() });
    }
    let mut wrong = 0usize;
    for (x, &y) in samples.iter().zip(labels) {
        if predict_proxy(proxy, x)? != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / samples.len() as f64)
}

pub fn proxy_disagreement(proxy: &MappingProxy, batch: &DataBatch) -> Result<f64> {
    disagreement(proxy, &batch.samples, &batch.labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Separable instance: labels from a random hyperplane, points inside the
    /// margin band dropped.
    fn separable(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<i8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < n {
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + 0.3;
            if a.abs() < 0.2 {
                continue;
            }
            ys.push(if a > 0.0 { 1 } else { -1 });
            xs.push(x);
        }
        (xs, ys)
    }

    /// Reference perceptron, written against plain arrays with the update
    /// condition y·a <= 0 on the label-space margin.
    fn reference_perceptron(xs: &[Vec<f64>], ys: &[i8], epochs: u32) -> (Vec<f64>, f64) {
        let d = xs[0].len();
        let mut w = vec![0.0f64; d];
        let mut b = 0.0f64;
        for _ in 0..epochs {
            let mut clean = true;
            for i in 0..xs.len() {
                let mut a = b;
                for j in 0..d {
                    a += w[j] * xs[i][j];
                }
                let pred = if a >= 0.0 { 1.0 } else { -1.0 };
                let y = ys[i] as f64;
                if pred != y {
                    for j in 0..d {
                        w[j] += y * xs[i][j];
                    }
                    b += y;
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
        (w, b)
    }

    #[test]
    fn converges_on_separable_data() {
        let (xs, ys) = separable(1, 60, 3);
        let p = fit_proxy("t", &xs, &ys, 10_000, None).unwrap();
        assert_eq!(disagreement(&p, &xs, &ys).unwrap(), 0.0);
        assert_eq!(p.version, 1);
    }

    #[test]
    fn constant_labels_fit_trivially() {
        let xs = vec![vec![1.0, -2.0], vec![-3.0, 0.5], vec![0.0, 0.0]];
        let ys = vec![1, 1, 1];
        let p = fit_proxy("t", &xs, &ys, 5, None).unwrap();
        assert_eq!(disagreement(&p, &xs, &ys).unwrap(), 0.0);
    }

    #[test]
    fn matches_reference_perceptron_seed_7() {
        let (xs, ys) = separable(7, 40, 4);
        for epochs in [1, 3, 1000] {
            let p = fit_proxy("t", &xs, &ys, epochs, None).unwrap();
            let (w, b) = reference_perceptron(&xs, &ys, epochs);
            assert_eq!(p.weights, w);
            assert_eq!(p.bias, b);
            let oracle = xs
                .iter()
                .zip(&ys)
                .filter(|(x, &y)| {
                    let a: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() + b;
                    (if a >= 0.0 { 1 } else { -1 }) != y
                })
                .count() as f64
                / xs.len() as f64;
            assert_eq!(disagreement(&p, &xs, &ys).unwrap(), oracle);
        }
    }

    #[test]
    fn refit_bumps_version() {
        let (xs, ys) = separable(2, 10, 2);
        let p1 = fit_proxy("t", &xs, &ys, 50, None).unwrap();
        let p2 = fit_proxy("t", &xs, &ys, 50, Some(&p1)).unwrap();
        assert_eq!(p2.version, p1.version + 1);
        assert_eq!(p2.weights, p1.weights);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit_proxy("t", &[], &[], 3, None), Err(CoreError::EmptyBatch)));
        assert!(fit_proxy("t", &[vec![1.0]], &[1, 1], 3, None).is_err());
        assert!(fit_proxy("t", &[vec![1.0]], &[0], 3, None).is_err());
    }

    #[test]
    fn predict_examples() {
        let p = MappingProxy { task_id: "t".into(), version: 1, weights: vec![1.0, 0.0], bias: 0.0 };
        assert_eq!(predict_proxy(&p, &[2.0, 1.0]).unwrap(), 1);
        assert_eq!(predict_proxy(&p, &[-2.0, 1.0]).unwrap(), -1);
        let zero = MappingProxy::constant("t", 2, 0.0);
        assert_eq!(predict_proxy(&zero, &[-7.0, 3.0]).unwrap(), 1);
        assert!(predict_proxy(&p, &[1.0]).is_err());
    }

    #[test]
    fn constant_negative_proxy_disagrees_with_all_positive() {
        let p = MappingProxy::constant("t", 2, -1.0);
        let xs = vec![vec![1.0, 2.0], vec![0.0, -1.0]];
        assert_eq!(disagreement(&p, &xs, &[1, 1]).unwrap(), 1.0);
        assert!(matches!(disagreement(&p, &[], &[]), Err(CoreError::EmptyBatch)));
    }

    #[test]
    fn disagreement_matches_per_sample_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<Vec<f64>> = (0..37).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let ys: Vec<i8> = (0..37).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
        let p = MappingProxy { task_id: "t".into(), version: 1, weights: vec![0.4, -1.1, 0.2], bias: 0.1 };
        let mut wrong = 0;
        for i in 0..xs.len() {
            let a = 0.4 * xs[i][0] - 1.1 * xs[i][1] + 0.2 * xs[i][2] + 0.1;
            let pred = if a >= 0.0 { 1 } else { -1 };
            if pred != ys[i] {
                wrong += 1;
            }
        }
        assert_eq!(disagreement(&p, &xs, &ys).unwrap(), wrong as f64 / 37.0);
    }

    proptest! {
        #[test]
        fn positive_scaling_preserves_predictions(
            w in prop::collection::vec(-10.0..10.0f64, 3),
            b in -10.0..10.0f64,
            x in prop::collection::vec(-10.0..10.0f64, 3),
            k in 1u32..64,
        ) {
            // Power-of-two scale keeps the scaled activation exact.
            let scale = f64::from(k).log2().ceil().exp2();
            let p = MappingProxy { task_id: "t".into(), version: 1, weights: w.clone(), bias: b };
            let q = MappingProxy {
                task_id: "t".into(),
                version: 1,
                weights: w.iter().map(|v| v * scale).collect(),
                bias: b * scale,
            };
            prop_assert_eq!(predict_proxy(&p, &x).unwrap(), predict_proxy(&q, &x).unwrap());
        }

        #[test]
        fn fit_is_deterministic(seed in any::<u64>()) {
            let (xs, ys) = separable(seed, 15, 2);
            let a = fit_proxy("t", &xs, &ys, 20, None).unwrap();
            let b = fit_proxy("t", &xs, &ys, 20, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
