use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::RetrainJob;

/// Weights, gradients and two optimizer moments, 4 bytes each.
pub const ADAPTER_BYTES_PER_PARAM: f64 = 16.0;

/// Parameters of one bottleneck adapter on a block of width `d_block`:
/// down-projection, up-projection and both biases.
pub fn adapter_params(d_block: u32, r: u32) -> u64 {
    let (d, r) = (u64::from(d_block), u64::from(r));
    2 * d * r + r + d
}

/// Adapter-based multi-task training plan for one fusion group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterPlan {
    pub frozen_prefix: usize,
    pub insertion_points: Vec<usize>,
    pub adapter_dim: u32,
    /// Parameter count of each adapter, one entry per insertion point.
    pub per_task_adapters: BTreeMap<String, Vec<u64>>,
    pub active_tasks: BTreeSet<String>,
}

impl AdapterPlan {
    /// Trainable parameters across active tasks. The frozen backbone
    /// contributes none.
    pub fn trainable_params(&self) -> u64 {
        self.per_task_adapters
            .iter()
            .filter(|(task, _)| self.active_tasks.contains(*task))
            .flat_map(|(_, counts)| counts)
            .sum()
    }

    /// Parameters across all tasks, active or not (what must stay resident).
    pub fn resident_params(&self) -> u64 {
        self.per_task_adapters.values().flatten().sum()
    }

    pub fn adapter_mem_mb(&self) -> f64 {
        self.resident_params() as f64 * ADAPTER_BYTES_PER_PARAM / (1024.0 * 1024.0)
    }
}

/// One adapter per (member task, insertion point) over the group's shared
/// frozen prefix. `insertion_points` are 1-based block indices.
pub fn make_adapter_plan(members: &[&RetrainJob], adapter_dim: u32, insertion_points: &[usize]) -> Result<AdapterPlan> {
    let first = members.first().ok_or(CoreError::EmptyGroup)?;
    let min_depth = members.iter().map(|j| j.n_blocks()).min().unwrap_or(0);
    for &point in insertion_points {
        if point == 0 || point > min_depth {
            return Err(CoreError::InvalidInsertionPoint { point, max: min_depth });
        }
    }
    let same_family = members.iter().all(|j| j.backbone_family == first.backbone_family);
    let frozen_prefix = if members.len() > 1 && same_family { min_depth } else { 0 };

    let mut per_task_adapters = BTreeMap::new();
    for job in members {
        let counts = insertion_points
            .iter()
            .map(|&p| {
                let width = job.block_width.get(p - 1).copied().unwrap_or(0);
                adapter_params(width, adapter_dim)
            })
            .collect();
        per_task_adapters.insert(job.task_id.clone(), counts);
    }
    let active_tasks = per_task_adapters.keys().cloned().collect();
    Ok(AdapterPlan {
        frozen_prefix,
        insertion_points: insertion_points.to_vec(),
        adapter_dim,
        per_task_adapters,
        active_tasks,
    })
}

/// Dynamic switching: activates or deactivates one task's adapters.
pub fn toggle_task(plan: &AdapterPlan, task_id: &str, active: bool) -> Result<AdapterPlan> {
    if !plan.per_task_adapters.contains_key(task_id) {
        return Err(CoreError::UnknownTask(task_id.to_owned()));
    }
    let mut next = plan.clone();
    if active {
        next.active_tasks.insert(task_id.to_owned());
    } else {
        next.active_tasks.remove(task_id);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::{JobId, RequestId};

    fn job(task: &str, width: u32, blocks: usize) -> RetrainJob {
        RetrainJob {
            job_id: JobId(0),
            request_id: RequestId(0),
            task_id: task.into(),
            backbone_family: "r50".into(),
            flops_per_block: vec![1.0; blocks],
            block_width: vec![width; blocks],
            epochs: 1,
            dataset: vec![],
            mem_model_mb: 1.0,
            mem_act_mb: 1.0,
        }
    }

    #[test]
    fn single_adapter_count() {
        let j = job("a", 64, 4);
        let plan = make_adapter_plan(&[&j], 8, &[1]).unwrap();
        assert_eq!(plan.trainable_params(), 1096);
        assert_eq!(plan.frozen_prefix, 0);
    }

    #[test]
    fn no_insertion_points_no_params() {
        let j = job("a", 64, 4);
        assert_eq!(make_adapter_plan(&[&j], 8, &[]).unwrap().trainable_params(), 0);
    }

    #[test]
    fn three_tasks_two_points() {
        let jobs = [job("a", 32, 4), job("b", 32, 4), job("c", 32, 4)];
        let refs: Vec<&RetrainJob> = jobs.iter().collect();
        let plan = make_adapter_plan(&refs, 4, &[1, 3]).unwrap();
        assert_eq!(plan.trainable_params(), 1752);
        assert_eq!(plan.frozen_prefix, 4);
        assert_eq!(plan.active_tasks.len(), 3);
    }

    #[test]
    fn plan_errors() {
        assert!(matches!(make_adapter_plan(&[], 8, &[1]), Err(CoreError::EmptyGroup)));
        let j = job("a", 64, 2);
        assert!(matches!(
            make_adapter_plan(&[&j], 8, &[3]),
            Err(CoreError::InvalidInsertionPoint { point: 3, max: 2 })
        ));
        assert!(make_adapter_plan(&[&j], 8, &[0]).is_err());
    }

    #[test]
    fn toggling() {
        let j = job("a", 64, 4);
        let plan = make_adapter_plan(&[&j], 8, &[1, 2]).unwrap();
        let off = toggle_task(&plan, "a", false).unwrap();
        assert_eq!(off.trainable_params(), 0);
        assert_eq!(off.resident_params(), plan.resident_params());
        assert_eq!(toggle_task(&off, "a", true).unwrap(), plan);
        assert!(matches!(toggle_task(&plan, "zzz", false), Err(CoreError::UnknownTask(_))));

        let jobs = [job("a", 32, 4), job("b", 32, 4), job("c", 32, 4)];
        let refs: Vec<&RetrainJob> = jobs.iter().collect();
        let plan = make_adapter_plan(&refs, 4, &[1, 2]).unwrap();
        let two = toggle_task(&plan, "b", false).unwrap();
        assert_eq!(3 * two.trainable_params(), 2 * plan.trainable_params());
    }
}
