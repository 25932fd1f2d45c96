//! Prediction-error statistics, inference benchmarking and report writers.

pub mod alloc;
pub mod bench;
pub mod report;
pub mod stats;

pub use alloc::CountingAllocator;
pub use bench::{bench_inference, bench_inference_with, ComplexityReport, MemoryProbe, MIN_REPETITIONS, WARMUP_PREDICTIONS};
pub use report::{parse_table2_csv, write_reports, ErrorRow, ModelComplexity, ModelErrors, ReportDump};
pub use stats::{compute_error_stats, percentile, percentile_sorted, ErrorStats, TABLE2_COLUMNS};
