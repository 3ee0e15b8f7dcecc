//! Experiment runner: configuration profiles, the train/evaluate loop with
//! metrics files, multi-run suites, aggregate reports and advice-coverage
//! analysis.
//!
//! Files written per run directory:
//!
//! | file | content |
//! |------|---------|
//! | `config.toml` | the fully resolved run configuration |
//! | `metrics.jsonl` | one JSON object per line: `kind` (`eval` or `window`), `step`, `eval_score`, `reuse_count_window`, `collection_count_window`, `tau_current`, `budget_remaining`, `reuse_accuracy_running` |
//! | `summary.json` | final score, learning-curve AUC, reuse ratio %, reuse accuracy %, counters |
//! | `advice_buffer.csv` | collected pairs as `action,x0,x1,...` |
//! | `student.ckpt`, `imitation.ckpt`, `imitation.json` | trained networks and τ |
//!
//! A suite additionally writes `suite_summary.csv` at its root.

use std::path::Path;

use thiserror::Error;

use crate::advising::AdvisingError;
use crate::envs::EnvError;
use crate::imitation::ImitationError;
use crate::nn::NnError;
use crate::teacher::TeacherError;

pub mod config;
pub mod diversity;
pub mod run;
pub mod suite;

pub use config::{ConfigError, Profile, RunConfig, TeacherConfig};
pub use diversity::{diversity_report, Coverage, DiversityReport, DiversityRow};
pub use run::{build_run, evaluate_policy, read_metrics, run, run_dir, MetricsRecord, RecordKind, RunStatus, RunSummary};
pub use suite::{aggregate, format_table, load_summaries, run_suite, AggregateRow, Stat, SuiteOutcome};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Advising(#[from] AdvisingError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Imitation(#[from] ImitationError),
    #[error("{path}: {source}")]
    Path {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("evaluation changed training state: {0}")]
    EvalPurity(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Path {
            path: path.display().to_string(),
            source,
        }
    }
}
