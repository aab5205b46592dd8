//! Orchestration of the benchmark pipeline and its reports.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use commands::run_cli;
pub use config::{RunConfig, StageName};
pub use pipeline::{run_pipeline, ExitStatus, RunReport};
pub use report::{emit_report, Format, Results};
