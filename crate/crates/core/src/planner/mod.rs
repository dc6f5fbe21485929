//! Edge-side computation-reuse planning.
//!
//! Pending retraining jobs that run the same backbone over overlapping data
//! can share forward passes through the common frozen prefix. The planner
//! scores every pair ([`pairwise_benefit`]), agglomerates jobs greedily into
//! [`FusionGroup`]s under a GPU memory cap ([`greedy_fuse`]), and gives each
//! group an [`AdapterPlan`]: per-task bottleneck adapters over a frozen
//! backbone, with a switchable set of active tasks.

mod adapter;
mod fuse;
mod graph;

use serde::{Deserialize, Serialize};

use crate::ids::{BatchId, JobId, RequestId};

pub use adapter::{adapter_params, make_adapter_plan, toggle_task, AdapterPlan, ADAPTER_BYTES_PER_PARAM};
pub use fuse::{greedy_fuse, group_memory_mb, partition_cost, singleton_groups, FusionGroup, PlannerParams};
pub use graph::{build_reuse_graph, pairwise_benefit, pairwise_savings, ReuseEdge, ReuseGraph};

/// One task's retraining work as seen by the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrainJob {
    pub job_id: JobId,
    pub request_id: RequestId,
    pub task_id: String,
    pub backbone_family: String,
    /// MFLOP per batch for each backbone block; its length is the depth L.
    pub flops_per_block: Vec<f64>,
    /// Hidden width of each block, used to size adapters.
    pub block_width: Vec<u32>,
    pub epochs: u32,
    pub dataset: Vec<BatchId>,
    pub mem_model_mb: f64,
    pub mem_act_mb: f64,
}

impl RetrainJob {
    pub fn n_blocks(&self) -> usize {
        self.flops_per_block.len()
    }

    /// MFLOP of one full forward pass of one batch.
    pub fn forward_mflop(&self) -> f64 {
        self.flops_per_block.iter().sum()
    }

    /// Forward MFLOP of running this job alone, with no reuse.
    pub fn standalone_mflop(&self) -> f64 {
        self.dataset.len() as f64 * self.forward_mflop() * f64::from(self.epochs)
    }
}
