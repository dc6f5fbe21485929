//! Accuracy dynamics: how drift degrades a task and how retraining on a
//! dataset restores it.
//!
//! Retraining follows a saturating curve toward a ceiling. The ceiling depends
//! on how well the merged training data covers the task's current input
//! distribution, and the speed on how many samples are on-distribution.

use serde::{Deserialize, Serialize};

use crate::client::DataBatch;
use crate::error::{CoreError, Result};
use crate::sketch::{merge_all, w2_distance, GaussianSketch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    /// Learning rate of the saturating curve, per effective sample.
    pub eta: f64,
    /// Distance scale `s` for discounting off-distribution data.
    pub scale: f64,
    pub a_ceiling: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self { eta: 0.1, scale: 1.0, a_ceiling: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyState {
    pub current_acc: f64,
    /// Accuracy right after the most recent drift.
    pub a_base: f64,
    pub a_ceiling: f64,
    pub eta: f64,
}

impl AccuracyState {
    pub fn new(initial_acc: f64, curve: &CurveParams) -> Self {
        let acc = initial_acc.clamp(0.0, curve.a_ceiling);
        Self { current_acc: acc, a_base: acc, a_ceiling: curve.a_ceiling, eta: curve.eta }
    }
}

/// Ground-truth linear labeler `sign(w·x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labeler {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Labeler {
    pub fn label(&self, x: &[f64]) -> i8 {
        let a: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias;
        if a >= 0.0 {
            1
        } else {
            -1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub t: f64,
    pub sketch: GaussianSketch,
    pub labeler: Option<Labeler>,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainState {
    pub task_id: String,
    pub labeler: Labeler,
    pub domain_sketch: GaussianSketch,
    /// Time of the last applied change.
    pub updated_at: f64,
}

/// Applies a drift event: new input distribution, possibly a new labeler,
/// and an immediate accuracy drop that becomes the new floor.
pub fn inject_drift(
    domain: &DomainState,
    acc: &AccuracyState,
    event: &DriftEvent,
) -> Result<(DomainState, AccuracyState)> {
    if event.t < domain.updated_at {
        return Err(CoreError::OutOfOrderDrift { event: event.t, now: domain.updated_at });
    }
    let next_domain = DomainState {
        task_id: domain.task_id.clone(),
        labeler: event.labeler.clone().unwrap_or_else(|| domain.labeler.clone()),
        domain_sketch: event.sketch.clone(),
        updated_at: event.t,
    };
    let dropped = (acc.current_acc - event.drop.max(0.0)).max(0.0);
    let next_acc = AccuracyState { current_acc: dropped, a_base: dropped, ..*acc };
    Ok((next_domain, next_acc))
}

/// Sample count with each batch discounted by its distance to the domain.
pub fn effective_samples(dataset: &[&DataBatch], domain_sketch: &GaussianSketch, scale: f64) -> Result<f64> {
    let mut n_eff = 0.0;
    for b in dataset {
        n_eff += b.len() as f64 * (-w2_distance(&b.sketch, domain_sketch)? / scale).exp();
    }
    Ok(n_eff)
}

/// Attainable accuracy given how well the pooled data covers the domain.
pub fn coverage_ceiling(
    dataset: &[&DataBatch],
    domain_sketch: &GaussianSketch,
    acc: &AccuracyState,
    scale: f64,
) -> Result<f64> {
    let Some(merged) = merge_all(dataset.iter().map(|b| &b.sketch))? else {
        return Ok(acc.a_base);
    };
    let cov = (-w2_distance(&merged, domain_sketch)? / scale).exp();
    Ok(acc.a_base + (acc.a_ceiling - acc.a_base) * cov)
}

/// Moves accuracy toward `a_max` along the saturating curve. Never lowers it.
pub fn apply_retraining(acc: &AccuracyState, n_eff: f64, a_max: f64) -> AccuracyState {
    if a_max < acc.current_acc {
        return *acc;
    }
    let gain = (a_max - acc.current_acc) * (1.0 - (-acc.eta * n_eff.max(0.0)).exp());
    AccuracyState { current_acc: (acc.current_acc + gain).clamp(acc.current_acc, a_max), ..*acc }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub bandwidth_bytes_per_s: f64,
    pub rtt_s: f64,
}

pub fn transfer_time(bytes: u64, net: &NetworkModel) -> f64 {
    bytes as f64 / net.bandwidth_bytes_per_s + net.rtt_s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::BatchId;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sketch(mean: &[f64], std: &[f64]) -> GaussianSketch {
        GaussianSketch::new(mean.to_vec(), std.to_vec(), 1).unwrap()
    }

    fn domain() -> DomainState {
        DomainState {
            task_id: "car".into(),
            labeler: Labeler { weights: vec![1.0, 0.0], bias: 0.0 },
            domain_sketch: sketch(&[0.0, 0.0], &[1.0, 1.0]),
            updated_at: 0.0,
        }
    }

    fn acc(current: f64) -> AccuracyState {
        AccuracyState { current_acc: current, a_base: current, a_ceiling: 0.9, eta: 0.1 }
    }

    fn event(t: f64, drop: f64) -> DriftEvent {
        DriftEvent { t, sketch: sketch(&[1.0, 0.0], &[1.0, 1.0]), labeler: None, drop }
    }

    #[test]
    fn drift_drops_accuracy() {
        let (_, a) = inject_drift(&domain(), &acc(0.85), &event(10.0, 0.0)).unwrap();
        assert_eq!(a.current_acc, 0.85);
        let (_, a) = inject_drift(&domain(), &acc(0.3), &event(10.0, 0.5)).unwrap();
        assert_eq!(a.current_acc, 0.0);
        let (d, a) = inject_drift(&domain(), &acc(0.85), &event(100.0, 0.25)).unwrap();
        assert!((a.current_acc - 0.60).abs() < 1e-12);
        assert_eq!(a.a_base, a.current_acc);
        assert_eq!(d.domain_sketch.mean, vec![1.0, 0.0]);
        assert_eq!(d.labeler, domain().labeler);
        assert!(matches!(inject_drift(&d, &a, &event(50.0, 0.1)), Err(CoreError::OutOfOrderDrift { .. })));
    }

    #[test]
    fn effective_samples_examples() {
        let dom = domain();
        assert_eq!(effective_samples(&[], &dom.domain_sketch, 1.0).unwrap(), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let batches: Vec<DataBatch> = (0..5)
            .map(|i| {
                let n = 4 + 3 * i;
                let samples: Vec<Vec<f64>> =
                    (0..n).map(|_| vec![normal.sample(&mut rng) + i as f64, normal.sample(&mut rng)]).collect();
                DataBatch::new(BatchId(i as u64), "A", samples, vec![1; n]).unwrap()
            })
            .collect();
        let refs: Vec<&DataBatch> = batches.iter().collect();
        let got = effective_samples(&refs, &dom.domain_sketch, 1.5).unwrap();
        // Per-batch recomputation from raw moments.
        let oracle: f64 = batches
            .iter()
            .map(|b| {
                let n = b.samples.len() as f64;
                let mut d2 = 0.0;
                for k in 0..2 {
                    let m = b.samples.iter().map(|x| x[k]).sum::<f64>() / n;
                    let v = b.samples.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / n;
                    let (dm, ds) = (m - dom.domain_sketch.mean[k], v.sqrt() - dom.domain_sketch.std[k]);
                    d2 += dm * dm + ds * ds;
                }
                n * (-d2.sqrt() / 1.5).exp()
            })
            .sum();
        assert!((got - oracle).abs() < 1e-9);
    }

    #[test]
    fn on_distribution_batch_counts_fully() {
        let samples: Vec<Vec<f64>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect();
        let b = DataBatch::new(BatchId(0), "A", samples, vec![1; 20]).unwrap();
        let n = effective_samples(&[&b], &b.sketch, 1.0).unwrap();
        assert_eq!(n, 20.0);
        let a = AccuracyState { current_acc: 0.6, a_base: 0.6, a_ceiling: 0.9, eta: 0.1 };
        assert_eq!(coverage_ceiling(&[&b], &b.sketch, &a, 1.0).unwrap(), 0.9);
        assert_eq!(coverage_ceiling(&[], &b.sketch, &a, 1.0).unwrap(), 0.6);
    }

    #[test]
    fn ceiling_at_unit_distance() {
        let samples = vec![vec![1.0], vec![-1.0]];
        let b = DataBatch::new(BatchId(0), "A", samples, vec![1, 1]).unwrap();
        let far = sketch(&[1.0], &[1.0]);
        let a = AccuracyState { current_acc: 0.6, a_base: 0.6, a_ceiling: 0.9, eta: 0.1 };
        let got = coverage_ceiling(&[&b], &far, &a, 1.0).unwrap();
        assert!((got - 0.710364).abs() < 1e-6);
    }

    #[test]
    fn learning_curve_examples() {
        let a = acc(0.5);
        assert_eq!(apply_retraining(&a, 0.0, 0.9), a);
        assert_eq!(apply_retraining(&acc(0.9), 50.0, 0.9).current_acc, 0.9);
        let got = apply_retraining(&a, 10.0, 0.9).current_acc;
        assert!((got - 0.75285).abs() < 1e-5);
        assert_eq!(apply_retraining(&acc(0.8), 10.0, 0.7), acc(0.8));
    }

    #[test]
    fn transfer_examples() {
        let net = NetworkModel { bandwidth_bytes_per_s: 1_048_576.0, rtt_s: 0.05 };
        assert_eq!(transfer_time(0, &net), 0.05);
        assert!((transfer_time(1_048_576, &net) - 1.05).abs() < 1e-12);
        let one = transfer_time(3000, &net) - net.rtt_s;
        assert!((transfer_time(6000, &net) - transfer_time(3000, &net) - one).abs() < 1e-15);
    }

    #[test]
    fn labeler_sign_convention() {
        let l = Labeler { weights: vec![1.0, -1.0], bias: 0.0 };
        assert_eq!(l.label(&[1.0, 1.0]), 1);
        assert_eq!(l.label(&[0.0, 1.0]), -1);
    }

    proptest! {
        #[test]
        fn retraining_monotone_and_bounded(
            current in 0.0..0.9f64, head in 0.0..1.0f64, n1 in 0.0..200.0f64, dn in 0.0..50.0f64,
        ) {
            let a = acc(current);
            let a_max = current + (0.9 - current) * head;
            let lo = apply_retraining(&a, n1, a_max).current_acc;
            let hi = apply_retraining(&a, n1 + dn, a_max).current_acc;
            prop_assert!(current <= lo && lo <= hi && hi <= a_max);
            prop_assert_eq!(apply_retraining(&acc(a_max), n1, a_max).current_acc, a_max);
        }
    }
}
