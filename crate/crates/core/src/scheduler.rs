//! Windowed, non-preemptive dispatch of fused retraining jobs onto GPUs.
//!
//! Requests that reach the edge wait for the next window boundary. At each
//! boundary the pending set is turned into [`RetrainJob`]s, fused (or kept as
//! singletons when fusion is disabled), costed, ranked by urgency per unit of
//! demand, and placed on GPUs that free up before the following boundary.
//! Groups that find no GPU stay pending and are re-planned next window, where
//! they may fuse with later arrivals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::client::{DataBatch, EvolutionRequest};
use crate::error::{CoreError, Result};
use crate::ids::{BatchId, JobId, RequestId};
use crate::iocost::{job_cost, reorder_batches, JobCost, MemoryModel};
use crate::planner::{greedy_fuse, group_memory_mb, singleton_groups, FusionGroup, PlannerParams, RetrainJob};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gpu {
    pub gpu_id: u32,
    pub mem_mb: f64,
    #[serde(default)]
    pub busy_until: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcePool {
    pub gpus: Vec<Gpu>,
}

impl ResourcePool {
    /// `count` identical idle GPUs with ids 0..count.
    pub fn uniform(count: u32, mem_mb: f64) -> Self {
        Self { gpus: (0..count).map(|gpu_id| Gpu { gpu_id, mem_mb, busy_until: 0.0 }).collect() }
    }

    pub fn max_mem_mb(&self) -> f64 {
        self.gpus.iter().map(|g| g.mem_mb).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerParams {
    /// Batching window length, seconds.
    pub window_s: f64,
    /// Staleness normalizer of the urgency term, seconds.
    pub t_norm_s: f64,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        Self { window_s: 5.0, t_norm_s: 60.0 }
    }
}

/// Urgency per unit of GPU demand. Urgency is the accuracy drop, inflated
/// linearly with time spent waiting at the edge.
pub fn priority(req: &EvolutionRequest, now: f64, demand_gpu_seconds: f64, t_norm: f64) -> Result<f64> {
    if demand_gpu_seconds.is_nan() || demand_gpu_seconds <= 0.0 {
        return Err(CoreError::NonPositiveDemand(demand_gpu_seconds));
    }
    let staleness = (now - req.t_arrival).max(0.0);
    let urgency = req.drift.delta_acc * (1.0 + staleness / t_norm);
    Ok(urgency / demand_gpu_seconds)
}

/// A pending request together with the job it would run.
#[derive(Debug, Clone)]
pub struct PendingJob {
    pub request: EvolutionRequest,
    pub job: RetrainJob,
}

/// Everything the planner needs besides the pending set and the pool.
#[derive(Debug, Clone, Copy)]
pub struct WindowContext<'a> {
    pub batches: &'a BTreeMap<BatchId, DataBatch>,
    pub planner: &'a PlannerParams,
    pub memory: &'a MemoryModel,
    pub throughput_mflops: f64,
    pub params: &'a SchedulerParams,
    /// When false every job runs alone.
    pub fuse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledJob {
    pub group: FusionGroup,
    /// Request of each member, aligned with `group.jobs`.
    pub requests: Vec<RequestId>,
    pub gpu_id: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub priority_at_dispatch: f64,
    pub order: Vec<BatchId>,
    pub cost: JobCost,
}

impl ScheduledJob {
    /// Identifier of the dispatch: its smallest member job.
    pub fn key(&self) -> JobId {
        self.group.jobs[0]
    }
}

/// A planned group that found no GPU this window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferredGroup {
    pub jobs: Vec<JobId>,
    pub requests: Vec<RequestId>,
    pub priority: f64,
    pub mem_mb: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub scheduled: Vec<ScheduledJob>,
    pub deferred: Vec<DeferredGroup>,
    /// Requests whose job can never fit any GPU.
    pub dropped: Vec<RequestId>,
    /// GPU states at the start and end of the window.
    pub gpus_before: Vec<Gpu>,
    pub gpus_after: Vec<Gpu>,
}

/// Per-task result of a finished dispatch, consumed by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub request_id: RequestId,
    pub job_id: JobId,
    pub t: f64,
}

struct Candidate {
    group: FusionGroup,
    requests: Vec<RequestId>,
    priority: f64,
    order: Vec<BatchId>,
    cost: JobCost,
}

fn batch_refs<'a>(ids: &[BatchId], batches: &'a BTreeMap<BatchId, DataBatch>) -> Result<Vec<&'a DataBatch>> {
    ids.iter()
        .map(|id| batches.get(id).ok_or_else(|| CoreError::OrderMismatch(format!("batch {id} not at the edge"))))
        .collect()
}

/// Reorders a group's batches and prices the result.
pub fn cost_group(group: &FusionGroup, ctx: &WindowContext<'_>) -> Result<(Vec<BatchId>, JobCost)> {
    let batches = batch_refs(&group.dataset, ctx.batches)?;
    let order = reorder_batches(&batches, ctx.memory, group.full_forward_mflop)?;
    let ordered = batch_refs(&order, ctx.batches)?;
    let cost = job_cost(group, &ordered, ctx.memory, ctx.throughput_mflops)?;
    Ok((order, cost))
}

/// Serializes dispatch and completion against one resource pool.
#[derive(Debug, Clone)]
pub struct Scheduler {
    pool: ResourcePool,
    running: BTreeMap<JobId, ScheduledJob>,
    completed: BTreeSet<JobId>,
}

impl Scheduler {
    pub fn new(pool: ResourcePool) -> Self {
        Self { pool, running: BTreeMap::new(), completed: BTreeSet::new() }
    }

    pub fn pool(&self) -> &ResourcePool {
        &self.pool
    }

    pub fn running(&self) -> impl Iterator<Item = &ScheduledJob> {
        self.running.values()
    }

    /// Plans and places the pending set at window boundary `now`.
    pub fn dispatch_window(
        &mut self,
        pending: &[PendingJob],
        now: f64,
        ctx: &WindowContext<'_>,
    ) -> Result<WindowOutcome> {
        let mut outcome = WindowOutcome { gpus_before: self.pool.gpus.clone(), ..WindowOutcome::default() };
        if pending.is_empty() {
            outcome.gpus_after = self.pool.gpus.clone();
            return Ok(outcome);
        }

        // Jobs that cannot fit even alone are dropped rather than blocking
        // the rest of the window.
        let cap = self.pool.max_mem_mb();
        let planner = PlannerParams { gpu_mem_mb: cap, ..ctx.planner.clone() };
        let mut feasible = Vec::with_capacity(pending.len());
        for p in pending {
            let need = group_memory_mb(&[&p.job], &planner)?;
            if need > cap {
                log::warn!("{}", CoreError::InfeasibleJob { job: p.job.job_id, need_mb: need, gpu_mb: cap });
                outcome.dropped.push(p.request.request_id);
            } else {
                feasible.push(p);
            }
        }

        let by_job: BTreeMap<JobId, &PendingJob> = feasible.iter().map(|p| (p.job.job_id, *p)).collect();
        let mut request_priority = BTreeMap::new();
        for p in &feasible {
            let alone = singleton_groups(std::slice::from_ref(&p.job), &planner)?;
            let (_, cost) = cost_group(&alone[0], ctx)?;
            let prio = priority(&p.request, now, cost.gpu_seconds, ctx.params.t_norm_s)?;
            request_priority.insert(p.job.job_id, prio);
        }

        let jobs: Vec<RetrainJob> = feasible.iter().map(|p| p.job.clone()).collect();
        let groups = if ctx.fuse { greedy_fuse(&jobs, &planner)? } else { singleton_groups(&jobs, &planner)? };

        let mut candidates = Vec::with_capacity(groups.len());
        for group in groups {
            let (order, cost) = cost_group(&group, ctx)?;
            let requests: Vec<RequestId> = group.jobs.iter().map(|j| by_job[j].request.request_id).collect();
            let prio = group.jobs.iter().map(|j| request_priority[j]).fold(f64::NEG_INFINITY, f64::max);
            candidates.push(Candidate { group, requests, priority: prio, order, cost });
        }
        let first_request = |c: &Candidate| c.requests.iter().min().copied();
        candidates.sort_by(|a, b| b.priority.total_cmp(&a.priority).then(first_request(a).cmp(&first_request(b))));

        let horizon = now + ctx.params.window_s;
        for c in candidates {
            let slot =
                self.pool.gpus.iter_mut().filter(|g| g.mem_mb >= c.group.mem_mb && g.busy_until < horizon).min_by(
                    |a, b| {
                        let start = |g: &Gpu| g.busy_until.max(now);
                        start(a)
                            .total_cmp(&start(b))
                            .then((a.mem_mb - c.group.mem_mb).total_cmp(&(b.mem_mb - c.group.mem_mb)))
                            .then(a.gpu_id.cmp(&b.gpu_id))
                    },
                );
            match slot {
                Some(gpu) => {
                    let t_start = gpu.busy_until.max(now);
                    let t_end = t_start + c.cost.gpu_seconds;
                    gpu.busy_until = t_end;
                    let job = ScheduledJob {
                        group: c.group,
                        requests: c.requests,
                        gpu_id: gpu.gpu_id,
                        t_start,
                        t_end,
                        priority_at_dispatch: c.priority,
                        order: c.order,
                        cost: c.cost,
                    };
                    self.running.insert(job.key(), job.clone());
                    outcome.scheduled.push(job);
                }
                None => outcome.deferred.push(DeferredGroup {
                    jobs: c.group.jobs,
                    requests: c.requests,
                    priority: c.priority,
                    mem_mb: c.group.mem_mb,
                }),
            }
        }
        outcome.gpus_after = self.pool.gpus.clone();
        Ok(outcome)
    }

    /// Retires a dispatch at its end time and reports one outcome per member.
    pub fn complete_job(&mut self, key: JobId, now: f64) -> Result<(ScheduledJob, Vec<TaskOutcome>)> {
        if self.completed.contains(&key) {
            return Err(CoreError::DoubleCompletion(key));
        }
        let job = self.running.get(&key).ok_or(CoreError::DoubleCompletion(key))?;
        if (job.t_end - now).abs() > 1e-9 * job.t_end.abs().max(1.0) {
            return Err(CoreError::CompletionTime { now, t_end: job.t_end });
        }
        let job = self.running.remove(&key).expect("checked above");
        self.completed.insert(key);
        let outcomes = job
            .group
            .jobs
            .iter()
            .zip(&job.group.tasks)
            .zip(&job.requests)
            .map(|((job_id, task), request_id)| TaskOutcome {
                task_id: task.clone(),
                request_id: *request_id,
                job_id: *job_id,
                t: now,
            })
            .collect();
        Ok((job, outcomes))
    }
}
