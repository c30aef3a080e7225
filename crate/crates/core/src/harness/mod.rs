//! Experiment orchestration: configuration, training loops, evaluation,
//! the search-then-read pipeline and report tables.

mod config;
mod gradients;
mod report;
mod run;

pub use config::{ExperimentConfig, TaskSource};
pub use gradients::gradient_suite;
pub use report::{emit_table, mean, EvalReport, Table};
pub use run::{
    answer_accuracy, evaluate, evaluate_pipeline, evaluate_support, load_tasks, read_checkpoint_file, run_experiment,
    support_accuracy, train_experiment, write_checkpoint_file, CurvePoint, MarkSource, TaskData, TaskModel, TrainedExperiment,
    TrainedTask,
};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{CorpusError, EncodingRegime};
use crate::model::ModelError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("report error: {0}")]
    Report(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Nmt,
    Ntm,
    MemnnS,
    MemnnR,
    PipelineSNmt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Nmt,
        ModelKind::Ntm,
        ModelKind::MemnnS,
        ModelKind::MemnnR,
        ModelKind::PipelineSNmt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nmt => "nmt",
            ModelKind::Ntm => "ntm",
            ModelKind::MemnnS => "memnn_s",
            ModelKind::MemnnR => "memnn_r",
            ModelKind::PipelineSNmt => "pipeline_s_nmt",
        }
    }

    /// Whether the pair is one of the supported model/regime combinations.
    pub fn accepts(self, regime: Regime) -> bool {
        use EncodingRegime::*;
        matches!(
            (self, regime),
            (ModelKind::Nmt, Regime::Encoding(FactsOnly | MarkedPassage | RawPassage))
                | (ModelKind::Ntm, Regime::Encoding(FactsOnly | MarkedPassage))
                | (ModelKind::MemnnS, Regime::FactSearch)
                | (ModelKind::MemnnR, Regime::FactResponse)
                | (ModelKind::PipelineSNmt, Regime::Encoding(PredictedMarked))
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown model {s:?}")))
    }
}

/// How a model sees a story: one of the input encodings, or the two
/// memory-network tasks (search supporting facts / answer from gold facts).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Encoding(EncodingRegime),
    FactSearch,
    FactResponse,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Encoding(r) => write!(f, "{r}"),
            Regime::FactSearch => f.write_str("fact_search"),
            Regime::FactResponse => f.write_str("fact_response"),
        }
    }
}

impl FromStr for Regime {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fact_search" => Ok(Regime::FactSearch),
            "fact_response" => Ok(Regime::FactResponse),
            _ => s
                .parse::<EncodingRegime>()
                .map(Regime::Encoding)
                .map_err(|_| HarnessError::Config(format!("unknown regime {s:?}"))),
        }
    }
}
