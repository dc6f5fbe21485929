//! Two-level memory cost model for prefix-activation reuse.
//!
//! A fast memory holds the summaries of the most recently computed prefix
//! activations, up to `cache_slots` of them. A batch whose sketch lies within
//! `sim_threshold` (W2) of a cached entry reuses it and only pays for the
//! unshared suffix; otherwise it pays the full forward pass plus a transfer
//! charge for going to high-level memory.
//!
//! Batch order therefore matters: [`reorder_batches`] chains nearest
//! neighbours so similar batches run back to back.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::client::DataBatch;
use crate::error::{CoreError, Result};
use crate::ids::BatchId;
use crate::planner::FusionGroup;
use crate::sketch::{w2_distance, GaussianSketch};

/// Extra compute per additional active task, relative to the backbone pass.
pub const ADAPTER_TASK_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryModel {
    pub cache_slots: usize,
    /// MFLOP-equivalent charged per miss for high-level memory traffic.
    pub transfer_cost_mflopeq: f64,
    /// Fraction of forward compute in the reusable prefix.
    pub reuse_ratio: f64,
    /// Maximum W2 distance at which a cached activation is reused.
    pub sim_threshold: f64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        Self { cache_slots: 8, transfer_cost_mflopeq: 200.0, reuse_ratio: 0.5, sim_threshold: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheOutcome {
    pub total_cost_mflopeq: f64,
    pub hits: u64,
    pub misses: u64,
}

/// Walks `order` through a recency cache holding the summaries of the last
/// `cache_slots` processed batches.
///
/// A batch hits when any cached summary is within `sim_threshold`; either way
/// its own summary then becomes the most recent entry and the oldest is
/// evicted. Because a batch's outcome depends only on the batches before it
/// in `order`, raising the threshold can only turn misses into hits.
pub fn simulate_cache(order: &[&DataBatch], mm: &MemoryModel, full_forward_mflop: f64) -> Result<CacheOutcome> {
    let hit_cost = (1.0 - mm.reuse_ratio) * full_forward_mflop;
    let miss_cost = full_forward_mflop + mm.transfer_cost_mflopeq;
    let mut cache: VecDeque<&GaussianSketch> = VecDeque::with_capacity(mm.cache_slots);
    let mut out = CacheOutcome { total_cost_mflopeq: 0.0, hits: 0, misses: 0 };
    for batch in order {
        let mut hit = false;
        for entry in &cache {
            if w2_distance(&batch.sketch, entry)? <= mm.sim_threshold {
                hit = true;
                break;
            }
        }
        if hit {
            out.hits += 1;
            out.total_cost_mflopeq += hit_cost;
        } else {
            out.misses += 1;
            out.total_cost_mflopeq += miss_cost;
        }
        if mm.cache_slots > 0 {
            if cache.len() == mm.cache_slots {
                cache.pop_front();
            }
            cache.push_back(&batch.sketch);
        }
    }
    Ok(out)
}

/// Greedy nearest-neighbour chain: start from the smallest batch id, then
/// repeatedly append the closest unvisited batch (smaller id on ties).
pub fn nearest_neighbor_chain(batches: &[&DataBatch]) -> Result<Vec<BatchId>> {
    if batches.is_empty() {
        return Err(CoreError::EmptyBatch);
    }
    let mut remaining: Vec<&DataBatch> = batches.to_vec();
    remaining.sort_by_key(|b| b.batch_id);
    let mut current = remaining.remove(0);
    let mut chain = vec![current.batch_id];
    while !remaining.is_empty() {
        let mut best = 0;
        let mut best_d = w2_distance(&current.sketch, &remaining[0].sketch)?;
        for (i, b) in remaining.iter().enumerate().skip(1) {
            let d = w2_distance(&current.sketch, &b.sketch)?;
            // Strict: `remaining` is id-sorted, so ties keep the smaller id.
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        current = remaining.remove(best);
        chain.push(current.batch_id);
    }
    Ok(chain)
}

/// Reorganizes a job's batches before training. Falls back to the input
/// order whenever the chained order would cost more under `mm`.
pub fn reorder_batches(batches: &[&DataBatch], mm: &MemoryModel, full_forward_mflop: f64) -> Result<Vec<BatchId>> {
    let chain = nearest_neighbor_chain(batches)?;
    let by_id: BTreeMap<BatchId, &DataBatch> = batches.iter().map(|b| (b.batch_id, *b)).collect();
    let chained: Vec<&DataBatch> = chain.iter().map(|id| by_id[id]).collect();
    let chained_cost = simulate_cache(&chained, mm, full_forward_mflop)?.total_cost_mflopeq;
    let identity_cost = simulate_cache(batches, mm, full_forward_mflop)?.total_cost_mflopeq;
    if chained_cost <= identity_cost {
        Ok(chain)
    } else {
        Ok(batches.iter().map(|b| b.batch_id).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobCost {
    pub gpu_seconds: f64,
    pub mflopeq: f64,
    pub hits: u64,
    pub misses: u64,
}

/// Compute multiplier for the group's active adapters.
pub fn active_task_multiplier(active_tasks: usize) -> f64 {
    1.0 + ADAPTER_TASK_MARGIN * active_tasks.saturating_sub(1) as f64
}

/// GPU demand of one fusion group processed in `order`.
pub fn job_cost(
    group: &FusionGroup,
    order: &[&DataBatch],
    mm: &MemoryModel,
    throughput_mflops: f64,
) -> Result<JobCost> {
    let mut ids: Vec<BatchId> = order.iter().map(|b| b.batch_id).collect();
    ids.sort();
    if ids != group.dataset {
        return Err(CoreError::OrderMismatch(format!(
            "order has {} batches, group dataset has {}",
            ids.len(),
            group.dataset.len()
        )));
    }
    let pass = simulate_cache(order, mm, group.full_forward_mflop)?;
    let mflopeq = pass.total_cost_mflopeq
        * f64::from(group.epochs)
        * active_task_multiplier(group.adapter_plan.active_tasks.len());
    Ok(JobCost { gpu_seconds: mflopeq / throughput_mflops, mflopeq, hits: pass.hits, misses: pass.misses })
}
