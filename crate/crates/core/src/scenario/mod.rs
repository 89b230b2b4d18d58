//! Scenario files, trace serialization and run metrics.

mod config;
mod metrics;
mod trace_csv;

pub use config::{DitherSpec, ForgettingSpec, LoopSpec, PlantSpec, Scenario};
pub use metrics::{compute_metrics, LoopMetrics, Metrics, SETTLING_FRACTION};
pub use trace_csv::{read_trace_csv, trace_header, write_trace_csv};
