//! Experiment configs, trajectory recording and the verification suites.

pub mod config;
pub mod record;
pub mod run;
pub mod suites;

pub use config::{ExperimentConfig, ObjectiveSpec};
pub use record::{export_csv, read_csv, CsvTable, Divergence, TrajectoryRecord, TrajectoryRow};
pub use run::{compare_optimizers, run_experiment, summarize, ComparisonSummary, OptimizerSummary};
pub use suites::{run_verification_suite, SuiteKind, SuiteOptions, SuiteReport};
