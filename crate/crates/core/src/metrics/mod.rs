//! Clinical-accuracy and language-quality scoring of generated reports.

pub mod ce;
pub mod nlg;
pub mod radrqi;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{AtagError, Result};
use crate::lexicon::Extractor;

pub use ce::{ce_scores, CeScore, KeywordLabeler, SubsetScore, FIVE, NO_FINDING, OBSERVATIONS};
pub use nlg::{bleu, corpus_bleu, corpus_rouge_l, rouge_l};
pub use radrqi::{
    count_case, jaccard, mirqi_reference, prf, radrqi, report_status, CategoryScore, Counts, RadRqiConfig,
    RadRqiScore, Status, TuplePair,
};

/// One generated report next to its reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCase {
    pub case_id: String,
    pub generated: Vec<Sentence>,
    pub reference: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub cases: usize,
    pub radrqi: RadRqiScore,
    pub mirqi: RadRqiScore,
    pub ce: CeScore,
    /// BLEU-1 through BLEU-4.
    pub bleu: [f64; 4],
    pub rouge_l: f64,
}

/// Scores every case. RadRQI categories come from `config`.
pub fn evaluate(cases: &[EvalCase], extractor: &Extractor, labeler: &KeywordLabeler, config: &RadRqiConfig) -> Result<ScoreReport> {
    if cases.is_empty() {
        return Err(AtagError::Precondition("nothing to evaluate".into()));
    }
    let pairs: Vec<TuplePair> = cases
        .iter()
        .map(|c| (extractor.report(&c.generated), extractor.report(&c.reference)))
        .collect();
    let flat: Vec<(Vec<String>, Vec<String>)> = cases
        .iter()
        .map(|c| (c.generated.concat(), c.reference.concat()))
        .collect();
    let gen_labels: Vec<_> = cases.iter().map(|c| labeler.label(&c.generated)).collect();
    let ref_labels: Vec<_> = cases.iter().map(|c| labeler.label(&c.reference)).collect();
    Ok(ScoreReport {
        cases: cases.len(),
        radrqi: radrqi(&pairs, config)?,
        mirqi: mirqi_reference(&pairs, config)?,
        ce: ce_scores(&gen_labels, &ref_labels),
        bleu: [1, 2, 3, 4].map(|n| corpus_bleu(&flat, n)),
        rouge_l: corpus_rouge_l(&flat),
    })
}

fn key(name: &str) -> String {
    name.trim().to_lowercase().replace(' ', "_")
}

impl ScoreReport {
    /// Flat `key=value` lines, one metric per line, sorted by key.
    pub fn to_score_file(&self) -> String {
        let mut m: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: String, v: f64| {
            m.insert(k, format!("{v:.6}"));
        };
        put("cases".into(), self.cases as f64);
        for (prefix, s) in [("radrqi", &self.radrqi), ("mirqi", &self.mirqi)] {
            put(format!("{prefix}.precision"), s.precision);
            put(format!("{prefix}.recall"), s.recall);
            put(format!("{prefix}.f1"), s.f1);
            put(format!("{prefix}.hits"), s.hits as f64);
        }
        for c in &self.radrqi.categories {
            put(format!("radrqi.category.{}.f1", key(&c.category)), c.f1);
        }
        for (name, s) in [("ce5", &self.ce.ce5), ("ce13", &self.ce.ce13), ("ce14", &self.ce.ce14)] {
            put(format!("{name}.precision"), s.precision);
            put(format!("{name}.recall"), s.recall);
            put(format!("{name}.f1"), s.f1);
        }
        put("ce.hits".into(), self.ce.hits as f64);
        for (obs, f1) in &self.ce.per_observation {
            put(format!("ce.observation.{}.f1", key(obs)), *f1);
        }
        for (n, b) in self.bleu.iter().enumerate() {
            put(format!("bleu{}", n + 1), *b);
        }
        put("rouge_l".into(), self.rouge_l);
        let mut out = String::new();
        for (k, v) in m {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Reads a score file back into a key → value map. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_score_file(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = line
            .split_once('=')
            .and_then(|(k, v)| v.trim().parse::<f64>().ok().map(|v| (k.trim().to_string(), v)));
        match parsed {
            Some((k, v)) => {
                out.insert(k, v);
            }
            None => {
                return Err(AtagError::Parse {
                    path: "<score file>".into(),
                    line: i + 1,
                    message: format!("expected key=value, found `{line}`"),
                })
            }
        }
    }
    Ok(out)
}
