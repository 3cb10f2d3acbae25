//! Metrics, per-slice breakdowns, seed averaging, the region ablation and
//! report tables.

mod ablation;
mod metrics;
mod report;
mod tables;

use std::path::Path;

pub use ablation::{region_ablation, AblationReport, AblationRow, DOMINANT_REGIONS, TABLE_REGION_ORDER};
pub use metrics::{weighted_metrics, ClassMetrics, Metrics};
pub use report::{evaluate, gold_digest, seed_average, slice_report, EvalInput, EvalReport, SeedSpread, SliceRow};
pub use tables::{build_tables, emit_tables, round_half_up, Cell, ReportInputs, Table, TableFormat};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no items to evaluate")]
    Empty,
    #[error("{gold} gold labels but {pred} predictions")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("reports were computed over different gold sets")]
    MismatchedGold,
    #[error("reports mix models `{0}` and `{1}`")]
    MixedModels(String, String),
    #[error("test item {0} has no slice tag")]
    Untagged(usize),
    #[error("no training rows left after region filtering")]
    EmptyTrain,
    #[error(transparent)]
    Bench(#[from] crate::bench::BenchError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("summary: {0}")]
    Json(String),
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
