//! Benchmark harness: dataset generation/loading, experiment orchestration,
//! metrics, and file I/O.

use thiserror::Error;

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod runner;

pub use config::{
    AggregateConfig, EstimatorKind, ExperimentConfig, InitialSize, ScheduleConfig, SchemaSource,
    ScorerKind, SeedRole,
};
pub use dataset::{generate_boolean_db, load_csv_db, write_csv_db, Dataset};
pub use metrics::{
    fmt_float, read_metrics_csv, summarize, write_metrics_csv, write_summary_csv, MetricsRow,
    SummaryRow,
};
pub use runner::{run_experiment, run_trial};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate rows at lines {first} and {second}: tuples must be distinct")]
    DuplicateRows { first: usize, second: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Estimator(#[from] crate::estimators::EstimatorError),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
