//! Deterministic discrete-event simulation of drift, requests, scheduling
//! and recovery, in co-evolution or independent mode.

mod curve;
mod engine;
mod metrics;
mod workload;

pub use curve::{
    apply_retraining, coverage_ceiling, effective_samples, inject_drift, transfer_time, AccuracyState, CurveParams,
    DomainState, DriftEvent, Labeler, NetworkModel,
};
pub use engine::{run, run_workload, SimOutcome, TraceRecord};
pub use metrics::{MetricsReport, Mode, TaskMetrics, TimelineRow};
pub use workload::{generate_workload, stream_rng, WorkloadEvent};
