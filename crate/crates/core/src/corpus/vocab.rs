use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::ReportCase;
use crate::error::{AtagError, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const EOR: &str = "<eor>";
pub const UNK: &str = "<unk>";

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
/// Ends a sentence.
pub const EOS_ID: usize = 2;
/// Ends the last sentence of a report.
pub const EOR_ID: usize = 3;
pub const UNK_ID: usize = 4;

const SPECIALS: [&str; 5] = [PAD, BOS, EOS, EOR, UNK];

/// Bijective token ↔ id map. Ids 0–4 are the special tokens; corpus tokens
/// follow in (frequency desc, lexicographic) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, usize>,
    min_frequency: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    min_frequency: usize,
    tokens: Vec<String>,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = AtagError;

    fn try_from(file: VocabularyFile) -> Result<Self> {
        Vocabulary::from_tokens(file.tokens, file.min_frequency)
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            min_frequency: v.min_frequency,
            tokens: v.tokens,
        }
    }
}

/// Token frequencies over every report sentence (findings then impression).
pub fn token_frequencies(cases: &[ReportCase]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for case in cases {
        for sentence in case.report_sentences() {
            for tok in sentence {
                *counts.entry(tok.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_frequency` times.
    pub fn build(cases: &[ReportCase], min_frequency: usize) -> Result<Self> {
        if min_frequency == 0 {
            return Err(AtagError::Validation("min_frequency must be at least 1".into()));
        }
        if cases.is_empty() {
            return Err(AtagError::Validation("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut kept: Vec<(String, usize)> = token_frequencies(cases)
            .into_iter()
            .filter(|(tok, n)| *n >= min_frequency && !SPECIALS.contains(&tok.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens, min_frequency)
    }

    /// Restores a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, min_frequency: usize) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(AtagError::Validation("vocabulary must start with the special tokens".into()));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if token_to_id.insert(tok.clone(), id).is_some() {
                return Err(AtagError::Validation(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Self {
            tokens,
            token_to_id,
            min_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_frequency(&self) -> usize {
        self.min_frequency
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, sentence: &[String]) -> Vec<usize> {
        sentence.iter().map(|t| self.id(t)).collect()
    }

    /// Encodes a report as one id sequence per sentence, each terminated by
    /// `<eos>`, except the final sentence which ends in `<eor>`.
    pub fn encode_report(&self, sentences: &[Vec<String>]) -> Vec<Vec<usize>> {
        let n = sentences.len();
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut ids = self.encode(s);
                ids.push(if i + 1 == n { EOR_ID } else { EOS_ID });
                ids
            })
            .collect()
    }

    /// Decodes ids up to (not including) the first terminator.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS_ID && id != EOR_ID)
            .filter(|&&id| id != PAD_ID && id != BOS_ID)
            .map(|&id| self.token(id).to_string())
            .collect()
    }
}
