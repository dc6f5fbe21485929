//! Per-client logic: runtime accuracy profiling, shift-type classification,
//! and budgeted resampling of local batches.

mod batch;
mod drift;
mod resample;
mod score;

pub use batch::DataBatch;
pub use drift::{
    classify_shift, profile_accuracy, AccuracyWindow, DriftReport, EvolutionRequest, ShiftClass, Thresholds,
};
pub use resample::{quantized_cost, resample_budget, ScoredBatch, KB};
pub use score::{
    combined_score, explicit_utility, implicit_complementarity, saturate, RemoteView, EXPLICIT_NOVELTY_WEIGHT,
    IMPLICIT_COVERAGE_WEIGHT,
};
