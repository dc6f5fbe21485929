//! Entry points behind the command-line subcommands.

use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::DataBatch;
use crate::config::{parse_config, SimConfig};
use crate::error::{CoreError, Result};
use crate::ids::BatchId;
use crate::iocost::{JobCost, MemoryModel};
use crate::planner::{greedy_fuse, FusionGroup, PlannerParams, RetrainJob};
use crate::report::{to_canonical_pretty, write_file, write_report};
use crate::scheduler::{cost_group, SchedulerParams, WindowContext};
use crate::sim::{run, run_workload, MetricsReport, Mode};
use crate::trace::{gen_trace, read_trace};

/// Runs one scenario and writes its outputs into `out`.
pub fn simulate(config_path: &Path, trace: Option<&Path>, mode: Mode, seed: u64, out: &Path) -> Result<MetricsReport> {
    let config = parse_config(config_path)?;
    let outcome = match trace {
        Some(t) => run_workload(&config, mode, seed, &read_trace(t)?)?,
        None => run(&config, mode, seed)?,
    };
    write_report(&outcome, out)?;
    Ok(outcome.report)
}

/// Writes the workload trace for `seed`. Returns the number of events.
pub fn generate_trace(config_path: &Path, seed: u64, out: &Path) -> Result<usize> {
    let config = parse_config(config_path)?;
    Ok(gen_trace(&config, seed, out)?.len())
}

/// Input of `plan`: pending jobs plus the batches they reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub planner: PlannerParams,
    #[serde(default)]
    pub memory: MemoryModel,
    #[serde(default = "default_throughput")]
    pub throughput_mflops: f64,
    pub batches: Vec<DataBatch>,
    pub jobs: Vec<RetrainJob>,
}

fn default_throughput() -> f64 {
    5000.0
}

/// A fusion group together with the batch order it will train in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedGroup {
    #[serde(flatten)]
    pub group: FusionGroup,
    pub order: Vec<BatchId>,
    pub cost: JobCost,
}

/// Fuses a job snapshot and prices each group in its reordered batch order.
pub fn plan_snapshot(snapshot: &Snapshot) -> Result<Vec<PlannedGroup>> {
    let groups = greedy_fuse(&snapshot.jobs, &snapshot.planner)?;
    let batches = snapshot.batches.iter().map(|b| (b.batch_id, b.clone())).collect();
    let params = SchedulerParams::default();
    let ctx = WindowContext {
        batches: &batches,
        planner: &snapshot.planner,
        memory: &snapshot.memory,
        throughput_mflops: snapshot.throughput_mflops,
        params: &params,
        fuse: true,
    };
    groups
        .into_iter()
        .map(|group| {
            let (order, cost) = cost_group(&group, &ctx)?;
            Ok(PlannedGroup { group, order, cost })
        })
        .collect()
}

/// Reads a snapshot, plans it and writes the planned groups as a JSON array.
pub fn plan(snapshot_path: &Path, out: &Path) -> Result<Vec<PlannedGroup>> {
    let text = fs::read_to_string(snapshot_path).map_err(|e| CoreError::io(snapshot_path, e))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let snapshot: Snapshot = serde_path_to_error::deserialize(&mut de).map_err(|e| CoreError::Snapshot {
        path: snapshot_path.to_owned(),
        msg: format!("{}: {}", e.path(), e.inner()),
    })?;
    let plan = plan_snapshot(&snapshot)?;
    write_file(out, &to_canonical_pretty(&plan)?)?;
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub coevolve_lowest_acc: f64,
    pub independent_lowest_acc: f64,
    pub margin: f64,
    pub coevolve_mean_acc: f64,
    pub independent_mean_acc: f64,
}

/// Both modes on every seed in `seeds`, in parallel. Per-run outputs go to
/// `out/seed-<n>/<mode>/`, the table to `out/sweep.json`.
pub fn sweep_config(config: &SimConfig, seeds: RangeInclusive<u64>, out: &Path) -> Result<Vec<SweepRow>> {
    let seeds: Vec<u64> = seeds.collect();
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let mut lowest = [0.0; 2];
            let mut mean = [0.0; 2];
            for (k, mode) in [Mode::Coevolve, Mode::Independent].into_iter().enumerate() {
                let outcome = run(config, mode, seed)?;
                write_report(&outcome, &out.join(format!("seed-{seed}")).join(mode.to_string()))?;
                lowest[k] = outcome.report.lowest_acc;
                mean[k] = outcome.report.mean_acc;
            }
            Ok(SweepRow {
                seed,
                coevolve_lowest_acc: lowest[0],
                independent_lowest_acc: lowest[1],
                margin: lowest[0] - lowest[1],
                coevolve_mean_acc: mean[0],
                independent_mean_acc: mean[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(&out.join("sweep.json"), &to_canonical_pretty(&rows)?)?;
    Ok(rows)
}

pub fn sweep(config_path: &Path, seeds: RangeInclusive<u64>, out: &Path) -> Result<Vec<SweepRow>> {
    let config = parse_config(config_path)?;
    sweep_config(&config, seeds, out)
}

/// Parses `A..B` (both ends included) or a single seed.
pub fn parse_seed_range(s: &str) -> std::result::Result<RangeInclusive<u64>, String> {
    let parse = |x: &str| x.trim().parse::<u64>().map_err(|e| format!("bad seed `{x}`: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b) = (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?);
            if a > b {
                return Err(format!("empty seed range {a}..{b}"));
            }
            Ok(a..=b)
        }
        None => {
            let a = parse(s)?;
            Ok(a..=a)
        }
    }
}
