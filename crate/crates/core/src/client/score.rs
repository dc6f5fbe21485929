use crate::error::Result;
use crate::proxy::{proxy_disagreement, MappingProxy};
use crate::sketch::{w2_distance, GaussianSketch};

use super::DataBatch;

pub const EXPLICIT_NOVELTY_WEIGHT: f64 = 0.5;
pub const IMPLICIT_COVERAGE_WEIGHT: f64 = 0.5;

/// Maps a nonnegative distance onto [0, 1).
pub fn saturate(w: f64) -> f64 {
    if w.is_infinite() {
        1.0
    } else {
        w / (1.0 + w)
    }
}

/// Predicted value of `batch` to the client's own model: how far it sits from
/// the data the model was trained on, and how often the current proxy gets it
/// wrong.
pub fn explicit_utility(batch: &DataBatch, train_sketch: &GaussianSketch, own_proxy: &MappingProxy) -> Result<f64> {
    let novelty = saturate(w2_distance(&batch.sketch, train_sketch)?);
    let uncertainty = proxy_disagreement(own_proxy, batch)?;
    Ok(EXPLICIT_NOVELTY_WEIGHT * novelty + (1.0 - EXPLICIT_NOVELTY_WEIGHT) * uncertainty)
}

/// Predicted value of `batch` to a remote task, judged only from what that
/// task publishes: its data sketch and its mapping proxy.
pub fn implicit_complementarity(
    batch: &DataBatch,
    remote_sketch: &GaussianSketch,
    remote_proxy: &MappingProxy,
) -> Result<f64> {
    let coverage = saturate(w2_distance(&batch.sketch, remote_sketch)?);
    let disagreement = proxy_disagreement(remote_proxy, batch)?;
    Ok(IMPLICIT_COVERAGE_WEIGHT * coverage + (1.0 - IMPLICIT_COVERAGE_WEIGHT) * disagreement)
}

/// What a client knows about another task.
#[derive(Debug, Clone, Copy)]
pub struct RemoteView<'a> {
    pub sketch: &'a GaussianSketch,
    pub proxy: &'a MappingProxy,
}

/// Upload score: a batch is worth as much as its value to the task that
/// benefits most from it.
pub fn combined_score(
    batch: &DataBatch,
    train_sketch: &GaussianSketch,
    own_proxy: &MappingProxy,
    remotes: &[RemoteView<'_>],
) -> Result<f64> {
    let mut best = explicit_utility(batch, train_sketch, own_proxy)?;
    for r in remotes {
        best = best.max(implicit_complementarity(batch, r.sketch, r.proxy)?);
    }
    Ok(best)
}
