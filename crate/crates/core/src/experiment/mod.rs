//! Reproducible end-to-end runs: synthesize or load data, draw splits,
//! fit metric banks, learn ensembles and evaluate them.
//!
//! Output layout under the run directory:
//!
//! ```text
//! config.toml                      resolved configuration
//! dataset.txt                      written by `synth`
//! split_NN/split.tsv               train/test ids
//! split_NN/bank/                   fitted base metrics
//! split_NN/ensemble_<method>.manifest
//! split_NN/cv_<method>.tsv         cross-validation table, if any
//! train_<method>.log               per-split training log
//! eval_<method>/ranks.tsv, curve.tsv
//! summary.tsv                      written by `report`
//! cache/                           unless MER_CACHE_DIR points elsewhere
//! ```

mod cache;
mod config;
mod pipeline;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::data::{DataError, TensorError};
use crate::ensemble::EnsembleError;
use crate::evaluation::EvalError;
use crate::metrics::MetricError;

pub use cache::sha256_hex;
pub use config::{BankPreset, BankSpec, DataSpec, ExperimentConfig, Method, TrainingSpec};
pub use pipeline::{
    load_experiment_dataset, run_eval, run_report, run_synth, run_train, EvalOutcome, RunOptions, SplitFailure,
    TrainOutcome,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("training stopped after {iterations} iterations without converging (violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },
    #[error("artifact mismatch: {0}")]
    Mismatch(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<ExperimentError> },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(ExperimentError) -> ExperimentError {
        move |e| ExperimentError::Stage { stage, source: Box::new(e) }
    }
}
