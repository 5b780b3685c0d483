//! Experiment orchestration behind the CLI: synthesis, training runs,
//! evaluation, reports, ratio sweeps, and mutual-learning runs.

mod eval;
mod manifest;
mod mutual_run;
mod report;
mod svg;
mod synth;
mod sweep;
mod train;

pub use eval::{accuracy_from_predictions, eval_model, read_predictions, run_eval, EvalSummary,
               Prediction};
pub use manifest::{read_manifest, write_manifest, Dataset, DatasetMeta, ManifestRecord};
pub use mutual_run::{run_mutual, train_mutual_steps, MutualRunConfig, MutualStepLog};
pub use report::{matrix_from_csv, matrix_from_runs, matrix_to_csv, run_report, run_report_dir,
                 ModelRef, ReportBundle};
pub use svg::{line_chart, radar_chart};
pub use synth::{run_synth, SynthKind};
pub use sweep::{run_sweep, SweepConfig, SweepRow};
pub use train::{batch_indices, load_model, load_run_record, run_train, train_model_steps,
                RunRecord, StepLog, SubsetResult, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("missing run: {0}")]
    MissingRun(String),
    #[error("step budgets differ across training sets: {kind} uses {got}, expected {expected}")]
    BudgetMismatch {
        expected: u64,
        got: u64,
        kind: String,
    },
    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Render(#[from] crate::render::RenderError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Mutual(#[from] crate::mutual::MutualError),
    #[error(transparent)]
    Ad(#[from] crate::autodiff::AdError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Short machine-readable tag for the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::BadArgument(_) => "bad-argument",
            HarnessError::MissingRun(_) => "missing-run",
            HarnessError::BudgetMismatch { .. } => "budget-mismatch",
            HarnessError::NonFiniteLoss { .. } => "non-finite-loss",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Render(_) => "render",
            HarnessError::Model(_) => "model",
            HarnessError::Mutual(_) => "mutual",
            HarnessError::Ad(_) => "autodiff",
            HarnessError::Metrics(_) => "metrics",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "json",
        }
    }
}
