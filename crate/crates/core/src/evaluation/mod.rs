//! Test-split metrics, the baseline flagging scores, and the seeded
//! benchmark harness.

pub mod benchmark;
pub mod iforest;
pub mod label_variance;
pub mod metrics;

pub use benchmark::{run_benchmark, BenchmarkOutput, BenchmarkResults, BenchmarkSummary, SummaryCell};
pub use iforest::{IsolationForest, IsolationForestSpec};
pub use label_variance::LabelVariance;
pub use metrics::{compute_metrics, matched_acceptance_threshold, score_metrics, RunMetrics};
