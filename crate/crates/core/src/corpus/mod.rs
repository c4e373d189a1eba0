//! Report corpora: line-delimited case records, tokenized sentences,
//! vocabularies and the deterministic synthetic generator.

mod synthetic;
mod text;
mod vocab;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoder::visual::{GrayImage, VisualFeatureMap};
use crate::error::{AtagError, Result};
use crate::lexicon::ExtractionTuple;

pub use synthetic::{generate_synthetic_corpus, SyntheticAbnormality, SyntheticSpec};
pub use text::{join_sentences, split_sentences, tokenize};
pub use vocab::{
    token_frequencies, Vocabulary, BOS, BOS_ID, EOR, EOR_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID,
};

pub type Sentence = Vec<String>;

/// One study: report sections, optional annotations and image data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportCase {
    pub case_id: String,
    pub findings: Vec<Sentence>,
    pub impression: Vec<Sentence>,
    pub annotations: Vec<String>,
    pub image_refs: Vec<String>,
    /// Precomputed visual features, when the record carries them.
    pub features: Option<VisualFeatureMap>,
    /// Raw grayscale pixels for the stub backbone.
    pub image: Option<GrayImage>,
    /// Ground-truth tuples recorded by the synthetic generator.
    pub truth: Option<Vec<ExtractionTuple>>,
}

impl ReportCase {
    /// Builds a case from free-text findings and impression.
    pub fn from_text(case_id: &str, findings: &str, impression: &str) -> Result<Self> {
        let findings = split_sentences(findings);
        let impression = split_sentences(impression);
        if findings.is_empty() && impression.is_empty() {
            return Err(AtagError::Validation(format!(
                "case `{case_id}` has neither findings nor impression"
            )));
        }
        Ok(Self {
            case_id: case_id.to_string(),
            findings,
            impression,
            annotations: Vec::new(),
            image_refs: Vec::new(),
            features: None,
            image: None,
            truth: None,
        })
    }

    /// The generation target: findings followed by impression.
    pub fn report_sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.findings.iter().chain(self.impression.iter())
    }

    pub fn report(&self) -> Vec<Sentence> {
        self.report_sentences().cloned().collect()
    }
}

/// Supported on-disk corpus layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// One JSON object per line.
    JsonLines,
}

impl FromStr for CorpusFormat {
    type Err = AtagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json-lines" => Ok(CorpusFormat::JsonLines),
            other => Err(AtagError::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRecord {
    case_id: String,
    #[serde(default)]
    findings: Option<String>,
    #[serde(default)]
    impression: Option<String>,
    #[serde(default)]
    annotations: Vec<String>,
    #[serde(default)]
    image_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<VisualFeatureMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image: Option<GrayImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<ExtractionTuple>>,
}

impl From<&ReportCase> for CaseRecord {
    fn from(c: &ReportCase) -> Self {
        CaseRecord {
            case_id: c.case_id.clone(),
            findings: Some(join_sentences(&c.findings)),
            impression: Some(join_sentences(&c.impression)),
            annotations: c.annotations.clone(),
            image_refs: c.image_refs.clone(),
            features: c.features.clone(),
            image: c.image.clone(),
            truth: c.truth.clone(),
        }
    }
}

fn record_to_case(rec: CaseRecord) -> std::result::Result<ReportCase, String> {
    let findings = split_sentences(rec.findings.as_deref().unwrap_or(""));
    let impression = split_sentences(rec.impression.as_deref().unwrap_or(""));
    if findings.is_empty() && impression.is_empty() {
        return Err("record has neither findings nor impression".into());
    }
    if rec.case_id.trim().is_empty() {
        return Err("empty case_id".into());
    }
    if let Some(f) = &rec.features {
        f.validate().map_err(|e| e.to_string())?;
    }
    Ok(ReportCase {
        case_id: rec.case_id,
        findings,
        impression,
        annotations: rec.annotations,
        image_refs: rec.image_refs,
        features: rec.features,
        image: rec.image,
        truth: rec.truth,
    })
}

/// Parses corpus text; `origin` names the source in error messages.
pub fn parse_corpus(text: &str, origin: &str) -> Result<Vec<ReportCase>> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| AtagError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let rec: CaseRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let case = record_to_case(rec).map_err(parse_err)?;
        if !seen.insert(case.case_id.clone()) {
            return Err(AtagError::Validation(format!(
                "{origin}:{}: duplicate case_id `{}`",
                i + 1,
                case.case_id
            )));
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<ReportCase>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
    match format {
        CorpusFormat::JsonLines => parse_corpus(&text, &path.display().to_string()),
    }
}

/// Renders cases in the line-delimited record format.
pub fn corpus_to_string(cases: &[ReportCase]) -> Result<String> {
    let mut out = String::new();
    for case in cases {
        let line = serde_json::to_string(&CaseRecord::from(case))?;
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, cases: &[ReportCase]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, corpus_to_string(cases)?).map_err(|e| AtagError::io(path, e))
}
