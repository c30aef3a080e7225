//! Error type shared by the three model families.

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::nn::NnError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("addressing error: {0}")]
    Addressing(String),
    #[error("search error: {0}")]
    Search(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Training(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Maps non-finite forward values and losses onto [`ModelError::Training`].
pub(crate) fn as_training(err: ModelError) -> ModelError {
    match err {
        ModelError::Tensor(TensorError::NonFinite { op }) => {
            ModelError::Training(format!("non-finite value produced by {op}"))
        }
        ModelError::Nn(NnError::Tensor(TensorError::NonFinite { op })) => {
            ModelError::Training(format!("non-finite value produced by {op}"))
        }
        ModelError::Nn(NnError::Training(msg)) => ModelError::Training(msg),
        other => other,
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
