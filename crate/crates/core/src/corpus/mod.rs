//! Stories in bAbI layout: parsing, simulation-based generation, vocabularies
//! and the input encodings fed to the models.

mod babi;
mod encode;
mod generate;
mod vocab;

pub use babi::{format_babi, parse_babi, tokenize};
pub use encode::{encode, EncodedSample, EncodingRegime};
pub use generate::{generate_split, generate_task, TaskFamily, TaskSpec, NUMBER_WORDS};
pub use vocab::{build_vocab, AnswerVocab, Vocabulary, BOS, COMMA, EOS, FIRST_WORD_ID, PAD, Q_DELIM, SUP_CLOSE, SUP_OPEN};

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error on line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("unknown token {0:?}")]
    Vocabulary(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Statement {
    pub id: u32,
    pub tokens: Vec<String>,
}

/// One question with the statements visible to it.
///
/// `supporting_ids` keeps the order given by the source (for generated data,
/// the order in which the facts are chained to reach the answer); evaluation
/// compares it as a set.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Story {
    pub statements: Vec<Statement>,
    pub question: Vec<String>,
    pub answers: Vec<String>,
    pub supporting_ids: Vec<u32>,
}

impl Story {
    pub fn answer_set(&self) -> BTreeSet<String> {
        self.answers.iter().cloned().collect()
    }

    pub fn support_set(&self) -> BTreeSet<u32> {
        self.supporting_ids.iter().copied().collect()
    }

    pub fn statement(&self, id: u32) -> Option<&Statement> {
        self.statements.iter().find(|s| s.id == id)
    }

    /// Checks the structural invariants: IDs start at 1 and strictly increase,
    /// answers are non-empty, supporting IDs are distinct and exist.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.statements.first().map(|s| s.id) != Some(1) {
            return Err("statement IDs must start at 1".into());
        }
        if self.statements.windows(2).any(|w| w[0].id >= w[1].id) {
            return Err("statement IDs must strictly increase".into());
        }
        if self.answers.is_empty() {
            return Err("story has no answer".into());
        }
        let mut seen = BTreeSet::new();
        for &id in &self.supporting_ids {
            if self.statement(id).is_none() {
                return Err(format!("supporting fact {id} does not exist"));
            }
            if !seen.insert(id) {
                return Err(format!("supporting fact {id} listed twice"));
            }
        }
        Ok(())
    }
}
