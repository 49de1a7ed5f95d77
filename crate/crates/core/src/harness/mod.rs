pub mod artifacts;
pub mod metrics;
pub mod presets;
pub mod runner;
pub mod scenario;

pub use artifacts::{
    emit_comparison_artifacts, emit_run_artifacts, prepare_output_dir, read_log_csv, write_log_csv,
};
pub use metrics::{summarize, RunMetrics};
pub use runner::{run_matrix, run_scenario, run_scenario_with, RunOverrides, RunResult, StepLog};
pub use scenario::{Reference, Scenario, SCHEMA_VERSION};
