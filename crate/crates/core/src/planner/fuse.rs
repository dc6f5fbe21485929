use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::ids::{BatchId, JobId};

use super::{make_adapter_plan, pairwise_savings, AdapterPlan, RetrainJob};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerParams {
    pub gpu_mem_mb: f64,
    #[serde(default = "default_overhead")]
    pub overhead_mflop: f64,
    #[serde(default = "default_adapter_dim")]
    pub adapter_dim: u32,
    /// 1-based blocks receiving adapters; `None` means every block. Points
    /// deeper than a group's shallowest member are skipped for that group.
    #[serde(default)]
    pub insertion_points: Option<Vec<usize>>,
}

fn default_overhead() -> f64 {
    500.0
}

fn default_adapter_dim() -> u32 {
    8
}

impl PlannerParams {
    pub fn new(gpu_mem_mb: f64) -> Self {
        Self {
            gpu_mem_mb,
            overhead_mflop: default_overhead(),
            adapter_dim: default_adapter_dim(),
            insertion_points: None,
        }
    }

    fn points_for_depth(&self, depth: usize) -> Vec<usize> {
        match &self.insertion_points {
            None => (1..=depth).collect(),
            Some(points) => points.iter().copied().filter(|&p| p >= 1 && p <= depth).collect(),
        }
    }
}

/// Jobs executed together, sharing forward passes over the frozen prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionGroup {
    /// Member jobs, ascending.
    pub jobs: Vec<JobId>,
    /// Task of each member, aligned with `jobs`.
    pub tasks: Vec<String>,
    pub shared_prefix: usize,
    pub shared_batches: Vec<BatchId>,
    /// Union of member datasets, ascending.
    pub dataset: Vec<BatchId>,
    pub epochs: u32,
    /// MFLOP of one full forward pass of one batch through the deepest member.
    pub full_forward_mflop: f64,
    pub adapter_plan: AdapterPlan,
    pub est_cost_mflop: f64,
    /// Shared-prefix savings minus fusion overhead; zero for singletons.
    pub savings_mflop: f64,
    pub mem_mb: f64,
}

impl FusionGroup {
    pub fn is_fused(&self) -> bool {
        self.jobs.len() > 1
    }
}

/// Fused memory: largest backbone, all adapters, largest activation set.
pub fn group_memory_mb(members: &[&RetrainJob], params: &PlannerParams) -> Result<f64> {
    let plan = plan_for(members, params)?;
    Ok(memory_with_plan(members, &plan))
}

fn memory_with_plan(members: &[&RetrainJob], plan: &AdapterPlan) -> f64 {
    let model = members.iter().map(|j| j.mem_model_mb).fold(0.0, f64::max);
    let act = members.iter().map(|j| j.mem_act_mb).fold(0.0, f64::max);
    model + plan.adapter_mem_mb() + act
}

fn plan_for(members: &[&RetrainJob], params: &PlannerParams) -> Result<AdapterPlan> {
    let depth = members.iter().map(|j| j.n_blocks()).min().ok_or(CoreError::EmptyGroup)?;
    make_adapter_plan(members, params.adapter_dim, &params.points_for_depth(depth))
}

fn build_group(members: &[&RetrainJob], params: &PlannerParams) -> Result<FusionGroup> {
    let mut members = members.to_vec();
    members.sort_by_key(|j| j.job_id);
    let members = members.as_slice();
    let adapter_plan = plan_for(members, params)?;
    let mem_mb = memory_with_plan(members, &adapter_plan);

    let mut savings = 0.0;
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            savings += pairwise_savings(a, b);
        }
    }
    let merges = members.len().saturating_sub(1) as f64;
    let net_savings = if members.len() > 1 { savings - merges * params.overhead_mflop } else { 0.0 };
    let standalone: f64 = members.iter().map(|j| j.standalone_mflop()).sum();

    let mut dataset = BTreeSet::new();
    for j in members {
        dataset.extend(j.dataset.iter().copied());
    }
    let shared_batches: Vec<BatchId> = if members.len() > 1 {
        dataset.iter().copied().filter(|b| members.iter().all(|j| j.dataset.contains(b))).collect()
    } else {
        Vec::new()
    };

    Ok(FusionGroup {
        jobs: members.iter().map(|j| j.job_id).collect(),
        tasks: members.iter().map(|j| j.task_id.clone()).collect(),
        shared_prefix: adapter_plan.frozen_prefix,
        shared_batches,
        dataset: dataset.into_iter().collect(),
        epochs: members.iter().map(|j| j.epochs).max().unwrap_or(1),
        full_forward_mflop: members.iter().map(|j| j.forward_mflop()).fold(0.0, f64::max),
        adapter_plan,
        est_cost_mflop: standalone - net_savings,
        savings_mflop: net_savings,
        mem_mb,
    })
}

/// Estimated forward cost of a partition.
pub fn partition_cost(groups: &[FusionGroup]) -> f64 {
    groups.iter().map(|g| g.est_cost_mflop).sum()
}

fn check_singletons(jobs: &[RetrainJob], params: &PlannerParams) -> Result<()> {
    let mut seen = BTreeSet::new();
    for j in jobs {
        if !seen.insert(j.job_id) {
            return Err(CoreError::DuplicateJob(j.job_id));
        }
        let need = group_memory_mb(&[j], params)?;
        if need > params.gpu_mem_mb {
            return Err(CoreError::InfeasibleJob { job: j.job_id, need_mb: need, gpu_mb: params.gpu_mem_mb });
        }
    }
    Ok(())
}

/// Every job in its own group; used when fusion is disabled.
pub fn singleton_groups(jobs: &[RetrainJob], params: &PlannerParams) -> Result<Vec<FusionGroup>> {
    check_singletons(jobs, params)?;
    let mut groups = jobs.iter().map(|j| build_group(&[j], params)).collect::<Result<Vec<_>>>()?;
    groups.sort_by_key(|g| g.jobs[0]);
    Ok(groups)
}

/// Greedy agglomeration. Starting from singletons, repeatedly merges the pair
/// of groups with the largest positive merged benefit (cross-group pairwise
/// savings minus one overhead) whose fused memory fits `gpu_mem_mb`. Ties go
/// to the pair with the smallest (min job id, min job id).
pub fn greedy_fuse(jobs: &[RetrainJob], params: &PlannerParams) -> Result<Vec<FusionGroup>> {
    check_singletons(jobs, params)?;
    let n = jobs.len();
    let mut savings = vec![0.0; n * n];
    for i in 0..n {
        for k in i + 1..n {
            let s = pairwise_savings(&jobs[i], &jobs[k]);
            savings[i * n + k] = s;
            savings[k * n + i] = s;
        }
    }

    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let min_id = |g: &[usize]| g.iter().map(|&i| jobs[i].job_id).min().expect("nonempty group");
    loop {
        let mut best: Option<(f64, (JobId, JobId), usize, usize)> = None;
        for x in 0..groups.len() {
            for y in x + 1..groups.len() {
                let cross: f64 = groups[x]
                    .iter()
                    .flat_map(|&i| groups[y].iter().map(move |&k| (i, k)))
                    .map(|(i, k)| savings[i * n + k])
                    .sum();
                let benefit = cross - params.overhead_mflop;
                if benefit <= 0.0 {
                    continue;
                }
                let (ix, iy) = (min_id(&groups[x]), min_id(&groups[y]));
                let key = if ix < iy { (ix, iy) } else { (iy, ix) };
                let better = match &best {
                    None => true,
                    Some((bb, bk, _, _)) => benefit > *bb || (benefit == *bb && key < *bk),
                };
                if !better {
                    continue;
                }
                let members: Vec<&RetrainJob> = groups[x].iter().chain(&groups[y]).map(|&i| &jobs[i]).collect();
                if group_memory_mb(&members, params)? <= params.gpu_mem_mb {
                    best = Some((benefit, key, x, y));
                }
            }
        }
        let Some((_, _, x, y)) = best else { break };
        let absorbed = groups.remove(y);
        groups[x].extend(absorbed);
    }

    let mut out = groups
        .iter()
        .map(|g| {
            let members: Vec<&RetrainJob> = g.iter().map(|&i| &jobs[i]).collect();
            build_group(&members, params)
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|g| g.jobs[0]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::RequestId;

    fn job(id: u64, data: std::ops::Range<u64>, mem: f64) -> RetrainJob {
        RetrainJob {
            job_id: JobId(id),
            request_id: RequestId(id),
            task_id: format!("t{id}"),
            backbone_family: "r50".into(),
            flops_per_block: vec![100.0; 4],
            block_width: vec![64; 4],
            epochs: 2,
            dataset: data.map(BatchId).collect(),
            mem_model_mb: mem,
            mem_act_mb: 100.0,
        }
    }

    #[test]
    fn one_job_one_group() {
        let groups = greedy_fuse(&[job(1, 0..5, 500.0)], &PlannerParams::new(10240.0)).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].jobs, vec![JobId(1)]);
        assert_eq!(groups[0].shared_prefix, 0);
        assert_eq!(groups[0].savings_mflop, 0.0);
        assert_eq!(groups[0].est_cost_mflop, 5.0 * 400.0 * 2.0);
    }

    #[test]
    fn two_overlapping_jobs_fuse() {
        let jobs = [job(1, 0..10, 500.0), job(2, 0..10, 500.0)];
        let groups = greedy_fuse(&jobs, &PlannerParams::new(10240.0)).unwrap();
        assert_eq!(groups.len(), 1);
        let g = &groups[0];
        assert_eq!(g.jobs, vec![JobId(1), JobId(2)]);
        assert_eq!(g.shared_prefix, 4);
        assert_eq!(g.shared_batches.len(), 10);
        assert_eq!(g.savings_mflop, 7500.0);
        assert_eq!(partition_cost(&groups), 2.0 * 8000.0 - 7500.0);
    }

    #[test]
    fn memory_blocks_fusion() {
        let jobs = [job(1, 0..10, 5000.0), job(2, 0..10, 5000.0)];
        let params = PlannerParams::new(5200.0);
        let groups = greedy_fuse(&jobs, &params).unwrap();
        // Each alone fits; together the second adapter set overflows.
        let single = group_memory_mb(&[&jobs[0]], &params).unwrap();
        let both = group_memory_mb(&[&jobs[0], &jobs[1]], &params).unwrap();
        assert!(single <= 5200.0);
        if both > 5200.0 {
            assert_eq!(groups.len(), 2);
        }
    }

    #[test]
    fn oversized_singleton_is_named() {
        let jobs = [job(1, 0..3, 500.0), job(7, 0..3, 20_000.0)];
        match greedy_fuse(&jobs, &PlannerParams::new(10240.0)) {
            Err(CoreError::InfeasibleJob { job, .. }) => assert_eq!(job, JobId(7)),
            other => panic!("expected infeasible job, got {other:?}"),
        }
    }

    #[test]
    fn ties_pick_smallest_ids() {
        // Three identical jobs: all pair benefits tie, so (1,2) merges first.
        let jobs = [job(3, 0..10, 500.0), job(1, 0..10, 500.0), job(2, 0..10, 500.0)];
        let mut params = PlannerParams::new(10240.0);
        params.overhead_mflop = 7000.0;
        let groups = greedy_fuse(&jobs, &params).unwrap();
        // Pair benefit 1000; merging the third then gains 2*8000-7000 > 0.
        assert_eq!(groups.len(), 1);
        params.overhead_mflop = 7999.0;
        let groups = greedy_fuse(&jobs, &params).unwrap();
        assert_eq!(groups.len(), 1);
        params.overhead_mflop = 8000.0;
        let groups = greedy_fuse(&jobs, &params).unwrap();
        assert_eq!(groups.len(), 3);
    }

    #[test]
    fn tie_break_order_observable_with_memory_cap() {
        // Only one pair can fit in memory; equal benefits, so (1,2) wins.
        let jobs = [job(3, 0..10, 4000.0), job(2, 0..10, 4000.0), job(1, 0..10, 4000.0)];
        let params = PlannerParams::new(4100.0 + 2.5 * plan_mem(&jobs[0]));
        let groups = greedy_fuse(&jobs, &params).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].jobs, vec![JobId(1), JobId(2)]);
        assert_eq!(groups[1].jobs, vec![JobId(3)]);
    }

    fn plan_mem(j: &RetrainJob) -> f64 {
        make_adapter_plan(&[j], 8, &[1, 2, 3, 4]).unwrap().adapter_mem_mb()
    }

    #[test]
    fn singleton_mode() {
        let jobs = [job(2, 0..10, 500.0), job(1, 0..10, 500.0)];
        let groups = singleton_groups(&jobs, &PlannerParams::new(10240.0)).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].jobs, vec![JobId(1)]);
        assert!(groups.iter().all(|g| !g.is_fused()));
    }
}
