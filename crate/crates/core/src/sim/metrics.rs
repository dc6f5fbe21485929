//! Run summary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Shared data and fused retraining.
    Coevolve,
    /// Each task retrains alone on its own uploads.
    Independent,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coevolve" => Ok(Mode::Coevolve),
            "independent" => Ok(Mode::Independent),
            other => Err(format!("unknown mode `{other}`, expected coevolve or independent")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Coevolve => "coevolve",
            Mode::Independent => "independent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineRow {
    pub t: f64,
    pub task_id: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskMetrics {
    pub lowest_acc: f64,
    pub mean_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub tasks: BTreeMap<String, TaskMetrics>,
    pub lowest_acc: f64,
    pub mean_acc: f64,
    pub gpu_seconds: f64,
    pub bytes_uploaded: u64,
    pub cache_hit_ratio: f64,
    pub fusion_savings_mflop: f64,
    pub request_count: u64,
    pub requests_completed: u64,
    pub requests_dropped: u64,
    pub jobs_dispatched: u64,
    pub fused_jobs: u64,
    pub timeline: Vec<TimelineRow>,
}

/// Aggregates accumulated by the engine.
#[derive(Debug, Clone, Default)]
pub(crate) struct Counters {
    pub gpu_seconds: f64,
    pub bytes_uploaded: u64,
    pub hits: u64,
    pub misses: u64,
    pub fusion_savings_mflop: f64,
    pub request_count: u64,
    pub requests_completed: u64,
    pub requests_dropped: u64,
    pub jobs_dispatched: u64,
    pub fused_jobs: u64,
}

impl MetricsReport {
    pub(crate) fn build(mode: Mode, seed: u64, timeline: Vec<TimelineRow>, c: &Counters) -> Self {
        let mut per_task: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for row in &timeline {
            let e = per_task.entry(row.task_id.clone()).or_insert((f64::INFINITY, 0.0, 0));
            e.0 = e.0.min(row.accuracy);
            e.1 += row.accuracy;
            e.2 += 1;
        }
        let tasks: BTreeMap<String, TaskMetrics> = per_task
            .into_iter()
            .map(|(task, (lo, sum, n))| (task, TaskMetrics { lowest_acc: lo, mean_acc: (sum / n as f64).max(lo) }))
            .collect();
        let (lowest_acc, mean_acc) = if timeline.is_empty() {
            (0.0, 0.0)
        } else {
            let lo = timeline.iter().map(|r| r.accuracy).fold(f64::INFINITY, f64::min);
            // Summation rounding must not push the mean below the minimum.
            (lo, (timeline.iter().map(|r| r.accuracy).sum::<f64>() / timeline.len() as f64).max(lo))
        };
        let lookups = c.hits + c.misses;
        Self {
            mode,
            seed,
            tasks,
            lowest_acc,
            mean_acc,
            gpu_seconds: c.gpu_seconds,
            bytes_uploaded: c.bytes_uploaded,
            cache_hit_ratio: if lookups == 0 { 0.0 } else { c.hits as f64 / lookups as f64 },
            fusion_savings_mflop: c.fusion_savings_mflop,
            request_count: c.request_count,
            requests_completed: c.requests_completed,
            requests_dropped: c.requests_dropped,
            jobs_dispatched: c.jobs_dispatched,
            fused_jobs: c.fused_jobs,
            timeline,
        }
    }
}
