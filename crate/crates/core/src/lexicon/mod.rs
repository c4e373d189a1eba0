//! Rule-based radiology term extraction.
//!
//! A [`Lexicon`] maps token sequences to canonical clinical findings and
//! descriptors. Sentences are scanned left to right with longest-match-first
//! lookup; negation is decided by trigger phrases within a fixed token window
//! and descriptors are attached to the nearest finding in the same sentence.

mod extract;
mod negation;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{AtagError, Result};

pub use extract::{
    associate_attributes, extract_annotation, extract_case_annotations, extract_report,
    extract_sentence, AssociationRules, Extractor,
};
pub use negation::{detect_negation, Mention, NegationRules};

const BUNDLED: &str = include_str!("../../data/lexicon.txt");

/// Subtype marking anatomical-part descriptors, used for the
/// `other, <part>` fallback abnormality.
pub const ANATOMICAL_PART: &str = "anatomical-part";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ClinicalFinding,
    Descriptor,
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clinical_finding" => Ok(Category::ClinicalFinding),
            "descriptor" => Ok(Category::Descriptor),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub surface_forms: Vec<Vec<String>>,
    pub canonical: String,
    pub category: Category,
    pub descriptor_subtype: Option<String>,
}

impl LexiconEntry {
    pub fn new(canonical: &str, category: Category, subtype: Option<&str>, surfaces: &[&str]) -> Self {
        Self {
            surface_forms: surfaces.iter().map(|s| tokenize(s)).collect(),
            canonical: canonical.to_lowercase(),
            category,
            descriptor_subtype: subtype.map(str::to_string),
        }
    }

    pub fn is_finding(&self) -> bool {
        self.category == Category::ClinicalFinding
    }

    pub fn is_anatomical_part(&self) -> bool {
        self.descriptor_subtype.as_deref() == Some(ANATOMICAL_PART)
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Tokens strictly between two non-overlapping spans.
    pub fn gap(&self, other: &Span) -> usize {
        if self.end <= other.start {
            other.start - self.end
        } else {
            self.start.saturating_sub(other.end)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TermMatch<'a> {
    pub span: Span,
    pub entry: &'a LexiconEntry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Negation {
    Positive,
    Negative,
}

impl fmt::Display for Negation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Negation::Positive => "positive",
            Negation::Negative => "negative",
        })
    }
}

/// `(abnormality, negation, attributes)` extracted from one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExtractionTuple {
    pub abnormality: String,
    pub negation: Negation,
    pub attributes: BTreeSet<String>,
    pub sentence_index: usize,
}

impl ExtractionTuple {
    pub fn positive(abnormality: &str, attributes: &[&str]) -> Self {
        Self {
            abnormality: abnormality.to_string(),
            negation: Negation::Positive,
            attributes: attributes.iter().map(|s| s.to_string()).collect(),
            sentence_index: 0,
        }
    }

    pub fn negative(abnormality: &str) -> Self {
        Self {
            abnormality: abnormality.to_string(),
            negation: Negation::Negative,
            attributes: BTreeSet::new(),
            sentence_index: 0,
        }
    }
}

/// Fallback abnormality name for descriptor-only mentions.
pub fn other_abnormality(part: &str) -> String {
    format!("other, {part}")
}

/// Immutable term dictionary with a first-token index.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    by_first: HashMap<String, Vec<(usize, usize)>>,
    max_len: usize,
}

impl Lexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut by_first: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut max_len = 0;
        for (ei, e) in entries.iter().enumerate() {
            if e.surface_forms.is_empty() || e.surface_forms.iter().any(Vec::is_empty) {
                return Err(AtagError::Validation(format!(
                    "lexicon entry `{}` has an empty surface form",
                    e.canonical
                )));
            }
            if !seen.insert((e.category, e.canonical.clone())) {
                return Err(AtagError::Validation(format!(
                    "duplicate canonical `{}` in category {:?}",
                    e.canonical, e.category
                )));
            }
            for (si, s) in e.surface_forms.iter().enumerate() {
                max_len = max_len.max(s.len());
                by_first.entry(s[0].clone()).or_default().push((ei, si));
            }
        }
        Ok(Self {
            entries,
            by_first,
            max_len,
        })
    }

    /// Parses `canonical | category | subtype | surface; surface; ...` lines.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AtagError::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('|').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 `|`-separated fields, found {}", fields.len())));
            }
            let category: Category = fields[1].parse().map_err(err)?;
            let subtype = (!fields[2].is_empty()).then_some(fields[2]);
            let surfaces: Vec<&str> = fields[3]
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            if fields[0].is_empty() || surfaces.is_empty() {
                return Err(err("canonical and at least one surface form are required".into()));
            }
            entries.push(LexiconEntry::new(fields[0], category, subtype, &surfaces));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, "bundled lexicon").expect("bundled lexicon is valid")
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn findings(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(|e| e.is_finding())
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.iter().filter(|e| !e.is_finding())
    }

    pub fn find(&self, canonical: &str, category: Category) -> Option<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category && e.canonical == canonical)
    }

    /// Resolves any surface form (or canonical) of a finding to its
    /// canonical name, case-insensitively.
    pub fn canonical_finding(&self, text: &str) -> Option<&str> {
        let toks = tokenize(text);
        self.findings()
            .find(|e| e.canonical == text.to_lowercase() || e.surface_forms.contains(&toks))
            .map(|e| e.canonical.as_str())
    }

    /// Longest-match-first, left-to-right, non-overlapping lookup.
    pub fn match_terms<'a>(&'a self, sentence: &[String]) -> Vec<TermMatch<'a>> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < sentence.len() {
            let mut best: Option<(usize, usize)> = None;
            if let Some(cands) = self.by_first.get(&sentence[i]) {
                for &(ei, si) in cands {
                    let form = &self.entries[ei].surface_forms[si];
                    let fits = i + form.len() <= sentence.len()
                        && sentence[i..i + form.len()] == form[..];
                    // longest wins; at equal length the earlier entry wins
                    if fits && best.is_none_or(|(_, len)| form.len() > len) {
                        best = Some((ei, form.len()));
                    }
                }
            }
            match best {
                Some((ei, len)) => {
                    out.push(TermMatch {
                        span: Span::new(i, i + len),
                        entry: &self.entries[ei],
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        debug_assert!(out.iter().all(|m| m.span.len() <= self.max_len));
        out
    }
}

/// Free-function form of [`Lexicon::match_terms`].
pub fn match_terms<'a>(sentence: &[String], lexicon: &'a Lexicon) -> Vec<TermMatch<'a>> {
    lexicon.match_terms(sentence)
}
