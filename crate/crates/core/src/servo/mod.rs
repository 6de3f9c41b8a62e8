//! Closed-loop orchestration, run configuration and logs.

pub mod config;
pub mod log;
mod run;
pub mod sweep;

pub use config::{RunConfig, TargetSpec};
pub use log::{RunSummary, ShapeRow, StepRecord};
pub use run::{
    metric_t1, oracle_errors, run_servo, run_world_config, simulate, tail_median, write_outputs, OracleRow,
    RunOutcome,
};
