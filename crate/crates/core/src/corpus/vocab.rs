use std::collections::{BTreeMap, BTreeSet};

use super::{CorpusError, Result, Story};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const Q_DELIM: usize = 3;
pub const SUP_OPEN: usize = 4;
pub const SUP_CLOSE: usize = 5;
pub const COMMA: usize = 6;
pub const FIRST_WORD_ID: usize = 7;

const RESERVED: [&str; FIRST_WORD_ID] = ["<pad>", "<bos>", "<eos>", "<q>", "<sup>", "</sup>", ","];

/// Token/ID bijection. IDs below [`FIRST_WORD_ID`] are markers; corpus words
/// follow in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from arbitrary words. Duplicates collapse; a word
    /// spelled like a marker is rejected.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut sorted = BTreeSet::new();
        for w in words {
            let w = w.as_ref();
            if RESERVED.contains(&w) {
                return Err(CorpusError::Vocabulary(format!("{w} collides with a reserved marker")));
            }
            if w.is_empty() {
                return Err(CorpusError::Vocabulary("empty token".into()));
            }
            sorted.insert(w.to_string());
        }
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(sorted)
            .collect();
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false: the markers are present in every vocabulary.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Corpus words in ID order, markers excluded.
    pub fn words(&self) -> &[String] {
        &self.tokens[FIRST_WORD_ID..]
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| self.id(t).ok_or_else(|| CorpusError::Vocabulary(t.clone())))
            .collect()
    }
}

/// Every word in statements, questions and answers, numbered from
/// [`FIRST_WORD_ID`] in lexicographic order.
pub fn build_vocab(stories: &[Story]) -> Result<Vocabulary> {
    let words = stories.iter().flat_map(|s| {
        s.statements
            .iter()
            .flat_map(|st| st.tokens.iter())
            .chain(&s.question)
            .chain(&s.answers)
    });
    Vocabulary::from_words(words)
}

/// Answer words as a dense class index, sorted lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerVocab {
    words: Vec<String>,
}

impl AnswerVocab {
    pub fn from_stories(stories: &[Story]) -> Self {
        let set: BTreeSet<&String> = stories.iter().flat_map(|s| &s.answers).collect();
        AnswerVocab {
            words: set.into_iter().cloned().collect(),
        }
    }

    pub fn from_words(words: Vec<String>) -> Self {
        let set: BTreeSet<String> = words.into_iter().collect();
        AnswerVocab {
            words: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index(&self, word: &str) -> Option<usize> {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}
