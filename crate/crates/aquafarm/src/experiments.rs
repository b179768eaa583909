//! Configuration, scenario orchestration, and table reproduction.

mod config;
mod report;
mod scenarios;

pub use config::{DeepOsSection, ExperimentConfig, FeedingSection, PinnSection, Preset, RunSection};
pub use report::{render_table, write_csv, ReportRow};
pub use scenarios::{
    emit_trajectory, fd6_value, grid_signature, run_appendix, run_benchmarks, run_fd_scenarios,
    run_pinn_tables, table_rows, Session,
};
