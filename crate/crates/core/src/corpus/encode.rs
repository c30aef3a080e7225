use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::vocab::{COMMA, EOS, Q_DELIM, SUP_CLOSE, SUP_OPEN};
use super::{CorpusError, Result, Story, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncodingRegime {
    /// Gold supporting statements only.
    FactsOnly,
    /// Whole passage with gold supporting statements wrapped in markers.
    MarkedPassage,
    /// Whole passage, no markers.
    RawPassage,
    /// Whole passage with caller-supplied statements wrapped in markers.
    PredictedMarked,
}

impl EncodingRegime {
    pub fn name(self) -> &'static str {
        match self {
            EncodingRegime::FactsOnly => "facts_only",
            EncodingRegime::MarkedPassage => "marked_passage",
            EncodingRegime::RawPassage => "raw_passage",
            EncodingRegime::PredictedMarked => "predicted_marked",
        }
    }
}

impl fmt::Display for EncodingRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncodingRegime {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        [
            EncodingRegime::FactsOnly,
            EncodingRegime::MarkedPassage,
            EncodingRegime::RawPassage,
            EncodingRegime::PredictedMarked,
        ]
        .into_iter()
        .find(|r| r.name() == s)
        .ok_or_else(|| CorpusError::Config(format!("unknown encoding regime {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodedSample {
    pub regime: EncodingRegime,
    pub input: Vec<usize>,
    /// Answer words separated by COMMA, terminated by EOS.
    pub target: Vec<usize>,
}

/// Turns a story into token IDs for the given regime. `marks` must be given
/// for [`EncodingRegime::PredictedMarked`] and only then.
pub fn encode(
    story: &Story,
    regime: EncodingRegime,
    marks: Option<&BTreeSet<u32>>,
    vocab: &Vocabulary,
) -> Result<EncodedSample> {
    let wrapped: BTreeSet<u32> = match (regime, marks) {
        (EncodingRegime::PredictedMarked, Some(m)) => {
            if let Some(bad) = m.iter().find(|&&id| story.statement(id).is_none()) {
                return Err(CorpusError::Contract(format!("mark {bad} names no statement")));
            }
            m.clone()
        }
        (EncodingRegime::PredictedMarked, None) => {
            return Err(CorpusError::Contract("predicted_marked needs marks".into()));
        }
        (_, Some(_)) => {
            return Err(CorpusError::Contract(format!("{regime} does not take marks")));
        }
        (EncodingRegime::MarkedPassage, None) => story.support_set(),
        _ => BTreeSet::new(),
    };
    let support = story.support_set();
    let mut input = Vec::new();
    for st in &story.statements {
        let ids = vocab.encode_tokens(&st.tokens)?;
        match regime {
            EncodingRegime::FactsOnly => {
                if support.contains(&st.id) {
                    input.extend(ids);
                }
            }
            _ if wrapped.contains(&st.id) => {
                input.push(SUP_OPEN);
                input.extend(ids);
                input.push(SUP_CLOSE);
            }
            _ => input.extend(ids),
        }
    }
    input.push(Q_DELIM);
    input.extend(vocab.encode_tokens(&story.question)?);
    if regime == EncodingRegime::RawPassage && input.iter().any(|&t| t == SUP_OPEN || t == SUP_CLOSE) {
        return Err(CorpusError::Contract("support markers leaked into a raw passage".into()));
    }

    let mut target = Vec::new();
    for (i, a) in story.answers.iter().enumerate() {
        if i > 0 {
            target.push(COMMA);
        }
        target.push(vocab.id(a).ok_or_else(|| CorpusError::Vocabulary(a.clone()))?);
    }
    target.push(EOS);
    Ok(EncodedSample { regime, input, target })
}
