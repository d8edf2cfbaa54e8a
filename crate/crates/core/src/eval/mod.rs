//! Evaluation harness.
//!
//! Datasets are directories of `<id>.sample.json` files holding a request,
//! a difficulty tier and a gold workflow. Experiments run every sample through
//! one pipeline configuration and score the results with the structural proxy
//! scorer in [`score`]; human judgements can be recorded with
//! [`score_record_manual`] and re-aggregated in place of the proxy scores.

mod dataset;
mod experiment;
pub mod score;

use std::path::PathBuf;

pub use dataset::{load_dataset, parse_sample, DatasetError, DatasetSample, Difficulty, SAMPLE_SUFFIX};
pub use experiment::{
    emit_report, render_csv, render_json, run_experiment, run_sample, score_record_manual, ExperimentConfig,
    ExperimentReport, ReportFormat, ReportRow, SampleResult, CSV_HEADER,
};
pub use score::{bucket_for, mean_accuracy, score_structural, score_structural_with, Bucket, DefectClass, ScoreRecord, Scorer};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("the dataset is empty")]
    EmptyDataset,
    #[error("{0} is not a rubric bucket (expected 1.0, 0.75, 0.5, 0.25 or 0.0)")]
    InvalidBucket(f64),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
