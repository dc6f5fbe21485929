//! Scenario configuration: schema, loading, and validation.
//!
//! Configs are JSON. Every struct rejects unknown keys, and every error
//! carries a path-like locator such as `clients[1].window`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::Thresholds;
use crate::iocost::MemoryModel;
use crate::planner::{PlannerParams, RetrainJob};
use crate::scheduler::{Gpu, ResourcePool, SchedulerParams};
use crate::sim::{CurveParams, Labeler, NetworkModel};
use crate::sketch::GaussianSketch;
use crate::{BatchId, JobId, RequestId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub locator: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.locator, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {}", path.display())]
    NotFound { path: PathBuf },

    #[error("cannot read config {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },

    #[error("unknown field at {locator}: {message}")]
    UnknownField { locator: String, message: String },

    #[error("schema violation at {locator}: {message}")]
    Schema { locator: String, message: String },

    #[error("invalid config: {}", join(.0))]
    Invalid(Vec<Violation>),
}

fn join(vs: &[Violation]) -> String {
    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl ConfigError {
    /// Locators of every reported problem.
    pub fn locators(&self) -> Vec<&str> {
        match self {
            ConfigError::UnknownField { locator, .. } | ConfigError::Schema { locator, .. } => vec![locator],
            ConfigError::Invalid(vs) => vs.iter().map(|v| v.locator.as_str()).collect(),
            _ => vec![],
        }
    }
}

/// Mean and standard deviation of a diagonal Gaussian input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Moments {
    pub fn to_sketch(&self) -> crate::Result<GaussianSketch> {
        GaussianSketch::new(self.mean.clone(), self.std.clone(), 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone_family: String,
    pub flops_per_block: Vec<f64>,
    pub block_width: Vec<u32>,
    pub epochs: u32,
    pub mem_model_mb: f64,
    pub mem_act_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientConfig {
    pub id: String,
    pub task: String,
    pub dim: usize,
    /// Sliding accuracy window, in samples.
    pub window: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
    pub upload_budget_bytes: u64,
    /// Data batches per second.
    pub arrival_rate: f64,
    pub batch_size: usize,
    /// Capacity of the local upload buffer, in batches.
    pub buffer_batches: usize,
    pub initial_acc: f64,
    pub proxy_epochs: u32,
    pub model: ModelConfig,
}

impl ClientConfig {
    pub fn retrain_job(&self, request_id: RequestId, dataset: Vec<BatchId>) -> RetrainJob {
        RetrainJob {
            job_id: JobId(request_id.0),
            request_id,
            task_id: self.task.clone(),
            backbone_family: self.model.backbone_family.clone(),
            flops_per_block: self.model.flops_per_block.clone(),
            block_width: self.model.block_width.clone(),
            epochs: self.model.epochs,
            dataset,
            mem_model_mb: self.model.mem_model_mb,
            mem_act_mb: self.model.mem_act_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub t: f64,
    pub sketch: Moments,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeler: Option<Labeler>,
    pub drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub task: String,
    pub sketch: Moments,
    pub labeler: Labeler,
    #[serde(default)]
    pub drift_schedule: Vec<DriftSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuSpec {
    pub gpu_id: u32,
    pub mem_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub gpus: Vec<GpuSpec>,
}

impl PoolConfig {
    pub fn to_pool(&self) -> ResourcePool {
        ResourcePool {
            gpus: self.gpus.iter().map(|g| Gpu { gpu_id: g.gpu_id, mem_mb: g.mem_mb, busy_until: 0.0 }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub overhead_mflop: f64,
    pub adapter_dim: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insertion_points: Option<Vec<usize>>,
    /// Foreign batches within this W2 distance of a request's own data join
    /// its training set.
    pub reuse_radius: f64,
    /// Only foreign batches uploaded this recently are considered.
    pub pool_horizon_s: f64,
}

impl PlannerConfig {
    pub fn params(&self, gpu_mem_mb: f64) -> PlannerParams {
        PlannerParams {
            gpu_mem_mb,
            overhead_mflop: self.overhead_mflop,
            adapter_dim: self.adapter_dim,
            insertion_points: self.insertion_points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    pub cache_slots: usize,
    pub sim_threshold: f64,
    pub reuse_ratio: f64,
    pub transfer_cost_mflopeq: f64,
    pub throughput_mflops: f64,
}

impl IoConfig {
    pub fn memory_model(&self) -> MemoryModel {
        MemoryModel {
            cache_slots: self.cache_slots,
            transfer_cost_mflopeq: self.transfer_cost_mflopeq,
            reuse_ratio: self.reuse_ratio,
            sim_threshold: self.sim_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon_s: f64,
    pub profile_interval_s: f64,
    pub clients: Vec<ClientConfig>,
    pub domains: Vec<DomainConfig>,
    pub pool: PoolConfig,
    pub network: NetworkModel,
    pub planner: PlannerConfig,
    pub io: IoConfig,
    pub scheduler: SchedulerParams,
    pub curve: CurveParams,
}

impl SimConfig {
    pub fn domain(&self, task: &str) -> Option<&DomainConfig> {
        self.domains.iter().find(|d| d.task == task)
    }

    /// Every constraint the schema cannot express, reported together.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Checker::default();
        v.positive("horizon_s", self.horizon_s);
        v.positive("profile_interval_s", self.profile_interval_s);

        let mut ids = BTreeSet::new();
        let mut tasks = BTreeSet::new();
        for (i, c) in self.clients.iter().enumerate() {
            let at = |f: &str| format!("clients[{i}].{f}");
            v.check(ids.insert(&c.id), &at("id"), &format!("duplicate client id `{}`", c.id));
            v.check(tasks.insert(&c.task), &at("task"), &format!("task `{}` already has a client", c.task));
            match self.domain(&c.task) {
                None => v.fail(&at("task"), &format!("no domain for task `{}`", c.task)),
                Some(d) => {
                    v.check(d.sketch.mean.len() == c.dim, &at("dim"), "does not match the domain sketch dimension")
                }
            }
            v.check(c.dim >= 1, &at("dim"), "must be at least 1");
            v.check(c.window >= 1, &at("window"), "must be at least 1");
            v.nonnegative(&at("thresholds.accuracy"), c.thresholds.accuracy);
            v.nonnegative(&at("thresholds.feature"), c.thresholds.feature);
            v.unit(&at("thresholds.label"), c.thresholds.label);
            v.nonnegative(&at("arrival_rate"), c.arrival_rate);
            v.check(c.batch_size >= 1, &at("batch_size"), "must be at least 1");
            v.check(c.buffer_batches >= 1, &at("buffer_batches"), "must be at least 1");
            v.check(
                (0.0..=self.curve.a_ceiling).contains(&c.initial_acc),
                &at("initial_acc"),
                "must lie in [0, curve.a_ceiling]",
            );
            v.check(c.proxy_epochs >= 1, &at("proxy_epochs"), "must be at least 1");
            let m = &c.model;
            v.check(!m.backbone_family.is_empty(), &at("model.backbone_family"), "must not be empty");
            v.check(!m.flops_per_block.is_empty(), &at("model.flops_per_block"), "needs at least one block");
            v.check(
                m.flops_per_block.iter().all(|f| f.is_finite() && *f > 0.0),
                &at("model.flops_per_block"),
                "entries must be positive",
            );
            v.check(
                m.block_width.len() == m.flops_per_block.len(),
                &at("model.block_width"),
                "needs one width per block",
            );
            v.check(m.block_width.iter().all(|w| *w > 0), &at("model.block_width"), "entries must be positive");
            v.check(m.epochs >= 1, &at("model.epochs"), "must be at least 1");
            v.positive(&at("model.mem_model_mb"), m.mem_model_mb);
            v.nonnegative(&at("model.mem_act_mb"), m.mem_act_mb);
        }

        let mut dtasks = BTreeSet::new();
        for (i, d) in self.domains.iter().enumerate() {
            let at = |f: &str| format!("domains[{i}].{f}");
            v.check(dtasks.insert(&d.task), &at("task"), &format!("duplicate domain for task `{}`", d.task));
            let dim = d.sketch.mean.len();
            v.moments(&at("sketch"), &d.sketch, dim);
            v.check(d.labeler.weights.len() == dim, &at("labeler.weights"), "length must match the sketch dimension");
            v.finite(&at("labeler.bias"), d.labeler.bias);
            let mut last = 0.0;
            for (k, e) in d.drift_schedule.iter().enumerate() {
                let at = |f: &str| format!("domains[{i}].drift_schedule[{k}].{f}");
                v.check(e.t.is_finite() && e.t >= last, &at("t"), "must be nonnegative and nondecreasing");
                last = if e.t.is_finite() { e.t.max(last) } else { last };
                v.moments(&at("sketch"), &e.sketch, dim);
                if let Some(l) = &e.labeler {
                    v.check(l.weights.len() == dim, &at("labeler.weights"), "length must match the sketch dimension");
                }
                v.unit(&at("drop"), e.drop);
            }
        }

        v.check(!self.pool.gpus.is_empty(), "pool.gpus", "at least one GPU is required");
        let mut gids = BTreeSet::new();
        for (i, g) in self.pool.gpus.iter().enumerate() {
            v.check(gids.insert(g.gpu_id), &format!("pool.gpus[{i}].gpu_id"), "duplicate GPU id");
            v.positive(&format!("pool.gpus[{i}].mem_mb"), g.mem_mb);
        }

        v.positive("network.bandwidth_bytes_per_s", self.network.bandwidth_bytes_per_s);
        v.positive("network.rtt_s", self.network.rtt_s);

        v.nonnegative("planner.overhead_mflop", self.planner.overhead_mflop);
        v.check(self.planner.adapter_dim >= 1, "planner.adapter_dim", "must be at least 1");
        if let Some(points) = &self.planner.insertion_points {
            v.check(points.iter().all(|p| *p >= 1), "planner.insertion_points", "blocks are numbered from 1");
        }
        v.nonnegative("planner.reuse_radius", self.planner.reuse_radius);
        v.positive("planner.pool_horizon_s", self.planner.pool_horizon_s);

        v.check(self.io.cache_slots >= 1, "io.cache_slots", "must be at least 1");
        v.nonnegative("io.sim_threshold", self.io.sim_threshold);
        v.unit("io.reuse_ratio", self.io.reuse_ratio);
        v.nonnegative("io.transfer_cost_mflopeq", self.io.transfer_cost_mflopeq);
        v.positive("io.throughput_mflops", self.io.throughput_mflops);

        v.positive("scheduler.window_s", self.scheduler.window_s);
        v.positive("scheduler.t_norm_s", self.scheduler.t_norm_s);

        v.positive("curve.eta", self.curve.eta);
        v.positive("curve.scale", self.curve.scale);
        v.check(self.curve.a_ceiling > 0.0 && self.curve.a_ceiling <= 1.0, "curve.a_ceiling", "must lie in (0, 1]");

        v.finish()
    }
}

#[derive(Default)]
struct Checker(Vec<Violation>);

impl Checker {
    fn fail(&mut self, locator: &str, message: &str) {
        self.0.push(Violation { locator: locator.to_owned(), message: message.to_owned() });
    }

    fn check(&mut self, ok: bool, locator: &str, message: &str) {
        if !ok {
            self.fail(locator, message);
        }
    }

    fn finite(&mut self, locator: &str, x: f64) {
        self.check(x.is_finite(), locator, "must be finite");
    }

    fn positive(&mut self, locator: &str, x: f64) {
        self.check(x.is_finite() && x > 0.0, locator, &format!("must be positive, got {x}"));
    }

    fn nonnegative(&mut self, locator: &str, x: f64) {
        self.check(x.is_finite() && x >= 0.0, locator, &format!("must be nonnegative, got {x}"));
    }

    fn unit(&mut self, locator: &str, x: f64) {
        self.check((0.0..=1.0).contains(&x), locator, &format!("must lie in [0, 1], got {x}"));
    }

    fn moments(&mut self, locator: &str, m: &Moments, dim: usize) {
        self.check(dim >= 1, &format!("{locator}.mean"), "must not be empty");
        self.check(m.mean.len() == dim, &format!("{locator}.mean"), &format!("expected {dim} entries"));
        self.check(m.std.len() == dim, &format!("{locator}.std"), &format!("expected {dim} entries"));
        self.check(m.mean.iter().all(|x| x.is_finite()), &format!("{locator}.mean"), "entries must be finite");
        self.check(
            m.std.iter().all(|x| x.is_finite() && *x >= 0.0),
            &format!("{locator}.std"),
            "entries must be nonnegative",
        );
    }

    fn finish(self) -> Result<(), ConfigError> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(self.0))
        }
    }
}

/// Parses and validates a config held in memory.
pub fn parse_config_str(text: &str) -> Result<SimConfig, ConfigError> {
    let syntax =
        |e: serde_json::Error| ConfigError::Syntax { line: e.line(), column: e.column(), message: e.to_string() };
    let mut de = serde_json::Deserializer::from_str(text);
    let config: SimConfig = serde_path_to_error::deserialize(&mut de).map_err(|err| {
        let locator = err.path().to_string();
        let inner = err.into_inner();
        match inner.classify() {
            serde_json::error::Category::Syntax | serde_json::error::Category::Eof => syntax(inner),
            _ if inner.to_string().starts_with("unknown field") => {
                ConfigError::UnknownField { locator, message: inner.to_string() }
            }
            _ => ConfigError::Schema { locator, message: inner.to_string() },
        }
    })?;
    de.end().map_err(syntax)?;
    config.validate()?;
    Ok(config)
}

/// Reads, parses and validates a config file.
pub fn parse_config(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            ConfigError::NotFound { path: path.to_owned() }
        } else {
            ConfigError::Read { path: path.to_owned(), source }
        }
    })?;
    parse_config_str(&text)
}
