//! Batch front-end for the approximation toolkit: configuration ingestion,
//! experiment orchestration, report and plot-data emission, self-test.

pub mod commands;
pub mod config;
pub mod report;

use config::RunConfig;
use report::Report;

/// Exit 0: all checks pass. Exit 1: the run completed but a check failed.
/// Exit 2: the run could not proceed (configuration or precondition error).
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;

pub fn run_approximate(config: RunConfig) -> anyhow::Result<Report> {
    commands::approximate::run(config)
}

pub fn run_counterexample(config: RunConfig) -> anyhow::Result<Report> {
    commands::counterexample::run(config)
}

pub fn run_selftest(config: RunConfig) -> anyhow::Result<Report> {
    commands::selftest::run(config)
}

/// Maps a finished run to its process exit code.
pub fn exit_code(result: &anyhow::Result<Report>) -> i32 {
    match result {
        Ok(report) if report.pass => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILURE,
        Err(_) => EXIT_PRECONDITION,
    }
}
