//! Mean estimators over stratified populations.
//!
//! The memory-type estimator keeps one memory value per stratum and mixes it with a
//! fresh draw each round using coefficients that keep it unbiased for the current
//! round while minimizing its variance. The memoryless stratified, pooled batch and
//! single-draw estimators serve as baselines.

mod coefficients;
mod estimate;
mod trace;
mod variance;

pub use coefficients::{
    coefficients_for, optimal_coefficients, unbiased_condition_holds, Coefficients, Degeneracy,
    DENOMINATOR_EPS,
};
pub use estimate::{
    batch_estimate, gmst_init, gmst_step, gst_estimate, sgd_estimate, FallbackCounts, MemoryState,
};
pub use trace::{summarize, trace_estimators, EstimateTrace, EstimatorKind, TraceSet, TraceSummary};
pub use variance::{predicted_variance_vsp, stratified_variance, variance_bound, vsp_stratum_term};
