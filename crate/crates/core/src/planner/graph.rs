use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ids::JobId;

use super::RetrainJob;

/// Forward MFLOP saved by running `a` and `b` together, before fusion
/// overhead. Only shared-data forward passes over the common prefix count.
pub fn pairwise_savings(a: &RetrainJob, b: &RetrainJob) -> f64 {
    if a.backbone_family != b.backbone_family {
        return 0.0;
    }
    let prefix = a.n_blocks().min(b.n_blocks());
    let ds_a: BTreeSet<_> = a.dataset.iter().collect();
    let shared = b.dataset.iter().collect::<BTreeSet<_>>().intersection(&ds_a).count();
    if shared == 0 {
        return 0.0;
    }
    // Same family normally means identical per-block cost; the smaller prefix
    // sum keeps the score symmetric when configs disagree.
    let pa: f64 = a.flops_per_block[..prefix].iter().sum();
    let pb: f64 = b.flops_per_block[..prefix].iter().sum();
    shared as f64 * pa.min(pb) * f64::from(a.epochs.min(b.epochs))
}

pub fn pairwise_benefit(a: &RetrainJob, b: &RetrainJob, overhead_mflop: f64) -> f64 {
    pairwise_savings(a, b) - overhead_mflop
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseEdge {
    pub a: JobId,
    pub b: JobId,
    pub weight: f64,
    pub fusable: bool,
}

/// Complete graph over pending jobs weighted by fusion benefit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseGraph {
    pub jobs: Vec<JobId>,
    pub edges: Vec<ReuseEdge>,
}

impl ReuseGraph {
    pub fn fusable_edges(&self) -> impl Iterator<Item = &ReuseEdge> {
        self.edges.iter().filter(|e| e.fusable)
    }
}

pub fn build_reuse_graph(jobs: &[RetrainJob], overhead_mflop: f64) -> Result<ReuseGraph> {
    let mut seen = BTreeSet::new();
    for j in jobs {
        if !seen.insert(j.job_id) {
            return Err(CoreError::DuplicateJob(j.job_id));
        }
    }
    let mut edges = Vec::with_capacity(jobs.len() * jobs.len().saturating_sub(1) / 2);
    for (i, a) in jobs.iter().enumerate() {
        for b in &jobs[i + 1..] {
            let weight = pairwise_benefit(a, b, overhead_mflop);
            edges.push(ReuseEdge { a: a.job_id, b: b.job_id, weight, fusable: weight > 0.0 });
        }
    }
    Ok(ReuseGraph { jobs: jobs.iter().map(|j| j.job_id).collect(), edges })
}
