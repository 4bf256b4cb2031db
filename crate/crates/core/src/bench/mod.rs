//! Metrics, the experiment-matrix runner and the self-check suite.

mod matrix;
mod metrics;
mod verify;

pub use crate::online::Normalizer;
pub use matrix::{
    log_rows, read_metrics_csv, run_matrix, summarize, write_metrics_csv, EnvSpec, ExperimentMatrix, MatrixResult,
    MetricRow, RunFailure, SummaryRow, METRICS_HEADER,
};
pub use metrics::{evaluate_model, msll, smse, NaiveModel, Scores};
pub use verify::{run_verify, CheckResult};
