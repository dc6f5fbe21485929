use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ids::{BatchId, RequestId};

/// Mean of per-sample correctness flags.
pub fn profile_accuracy(window: &[bool]) -> Result<f64> {
    if window.is_empty() {
        return Err(CoreError::EmptyWindow);
    }
    Ok(window.iter().filter(|&&ok| ok).count() as f64 / window.len() as f64)
}

/// Sliding window over the most recent `capacity` correctness flags.
#[derive(Debug, Clone)]
pub struct AccuracyWindow {
    capacity: usize,
    flags: VecDeque<bool>,
}

impl AccuracyWindow {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), flags: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, ok: bool) {
        if self.flags.len() == self.capacity {
            self.flags.pop_front();
        }
        self.flags.push_back(ok);
    }

    pub fn is_full(&self) -> bool {
        self.flags.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn accuracy(&self) -> Result<f64> {
        let (a, b) = self.flags.as_slices();
        if a.is_empty() && b.is_empty() {
            return Err(CoreError::EmptyWindow);
        }
        let ok = a.iter().chain(b).filter(|&&f| f).count();
        Ok(ok as f64 / self.flags.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShiftClass {
    NoDrift,
    CovariateShift,
    LabelShift,
    HybridShift,
    ConceptDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Accuracy drop that counts as degradation.
    pub accuracy: f64,
    /// Feature-distribution distance (W2, feature units).
    pub feature: f64,
    /// Label-distribution distance (total variation).
    pub label: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { accuracy: 0.05, feature: 0.5, label: 0.2 }
    }
}

/// Decision table: accuracy gates everything, then the two distribution
/// distances pick the shift type. An accuracy drop with neither distribution
/// moving is attributed to a changed X→Y relation.
pub fn classify_shift(delta_acc: f64, feat_dist: f64, label_dist: f64, th: &Thresholds) -> ShiftClass {
    if delta_acc <= th.accuracy {
        return ShiftClass::NoDrift;
    }
    match (feat_dist > th.feature, label_dist > th.label) {
        (true, false) => ShiftClass::CovariateShift,
        (false, true) => ShiftClass::LabelShift,
        (true, true) => ShiftClass::HybridShift,
        (false, false) => ShiftClass::ConceptDrift,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftReport {
    pub delta_acc: f64,
    pub feat_dist: f64,
    pub label_dist: f64,
    pub shift_class: ShiftClass,
}

impl DriftReport {
    pub fn new(delta_acc: f64, feat_dist: f64, label_dist: f64, th: &Thresholds) -> Self {
        Self { delta_acc, feat_dist, label_dist, shift_class: classify_shift(delta_acc, feat_dist, label_dist, th) }
    }
}

/// A client's asynchronous retraining request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionRequest {
    pub request_id: RequestId,
    pub client_id: String,
    pub task_id: String,
    /// When the client emitted the request.
    pub t_emit: f64,
    /// When the request and its manifest finished uploading to the edge.
    pub t_arrival: f64,
    pub drift: DriftReport,
    pub manifest: Vec<BatchId>,
    pub bytes_total: u64,
}
