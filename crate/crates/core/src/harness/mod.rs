//! Experiment pipeline: demonstrations from a soft-max expert, every
//! estimator on every demonstration, policy evaluation in the true model, and
//! summary reports.

mod config;
mod report;
mod run;
pub mod trace_io;

pub use config::{ExperimentConfig, Method};
pub use report::{report, Report};
pub use run::{
    demo_seed, estimator_seed, evaluation_seed, expert_seed, median, run_experiment, run_experiment_with, run_single,
    summarize, DemoRecord, ExpertBaseline, Histogram, MethodSummary, ResultsBundle, RunRecord, Setup,
};
pub use trace_io::{load_trace, read_trace, save_trace, write_trace, TRACE_HEADER};
