//! Simulation benchmark: design sweep, estimator arms, replication,
//! CSV output and plot-data aggregation.

pub mod config;
pub mod records;
pub mod run;
pub mod summary;

pub use config::{EstimatorKind, EstimatorSpec, RunConfig, ScenarioGrid, WORKERS_ENV};
pub use records::{read_records, sort_records, write_records, write_records_to, BenchRecord, RECORD_COLUMNS};
pub use run::{evaluate_arms, replicate_seed, run_benchmark, run_replicate};
pub use summary::{aggregate_plot_data, compute_oracles, write_oracles, write_summary, OracleRow, SummaryRow};
