//! Checkpoints, inference and the generated-reports file.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::train::{build_encoder, CachedConditioning, Trained, TrainingHistory};
use crate::autodiff::{ParamStore, Tape};
use crate::corpus::{join_sentences, split_sentences, ReportCase, Sentence, Vocabulary};
use crate::encoder::Encoder;
use crate::error::{AtagError, Result};
use crate::generator::{DecodeOptions, Decoder, Generated};
use crate::graph::AtagStructure;

pub const CHECKPOINT_FORMAT: &str = "atag-checkpoint/1";

/// Trained weights plus the hashes of the config and graph that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub graph_hash: String,
    pub config: RunConfig,
    pub vocabulary: Vocabulary,
    pub encoder: ParamStore,
    pub decoder: ParamStore,
    pub history: TrainingHistory,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, graph: &AtagStructure, trained: Trained) -> Result<Self> {
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            config_hash: config.hash(),
            graph_hash: graph.content_hash()?,
            config: config.clone(),
            vocabulary: trained.vocabulary,
            encoder: trained.encoder_params,
            decoder: trained.decoder_params,
            history: trained.history,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(AtagError::Version {
                found: ckpt.format,
                expected: CHECKPOINT_FORMAT.into(),
            });
        }
        if ckpt.config.hash() != ckpt.config_hash {
            return Err(AtagError::HashMismatch {
                what: "checkpoint config".into(),
                expected: ckpt.config_hash.clone(),
                found: ckpt.config.hash(),
            });
        }
        if !ckpt.encoder.is_finite() || !ckpt.decoder.is_finite() {
            return Err(AtagError::Numeric("checkpoint holds non-finite weights".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| AtagError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
        Self::from_json(&text)
    }
}

/// A checkpoint bound to its graph, ready to generate.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: RunConfig,
    pub vocabulary: Vocabulary,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub encoder_params: ParamStore,
    pub decoder_params: ParamStore,
}

impl Model {
    pub fn new(checkpoint: Checkpoint, graph: &AtagStructure) -> Result<Self> {
        let found = graph.content_hash()?;
        if found != checkpoint.graph_hash {
            return Err(AtagError::HashMismatch {
                what: "graph".into(),
                expected: checkpoint.graph_hash,
                found,
            });
        }
        let config = checkpoint.config;
        Ok(Self {
            encoder: build_encoder(graph, &config)?,
            decoder: Decoder::new(config.decoder_config(checkpoint.vocabulary.len()))?,
            vocabulary: checkpoint.vocabulary,
            encoder_params: checkpoint.encoder,
            decoder_params: checkpoint.decoder,
            config,
        })
    }

    pub fn generate_ids(&self, case: &ReportCase, options: DecodeOptions) -> Result<Generated> {
        let cond = CachedConditioning::compute(&self.encoder, &self.encoder_params, &self.config, case)?;
        let tape = Tape::new();
        self.decoder.generate(&tape, &self.decoder_params, &cond.bind(&tape), options)
    }

    /// Greedy report for one case.
    pub fn generate(&self, case: &ReportCase) -> Result<Vec<Sentence>> {
        let g = self.generate_ids(case, DecodeOptions::default())?;
        let report = g.sentences.iter().map(|s| self.vocabulary.decode(s)).collect();
        Ok(if self.config.postprocess { postprocess(report) } else { report })
    }
}

/// Drops repeated sentences (keeping the first) and sentences under two words.
pub fn postprocess(report: Vec<Sentence>) -> Vec<Sentence> {
    let mut seen = HashSet::new();
    report
        .into_iter()
        .filter(|s| s.len() >= 2 && seen.insert(s.clone()))
        .collect()
}

/// One generated report per case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReport {
    pub case_id: String,
    pub report: String,
}

pub fn generate_reports(model: &Model, cases: &[ReportCase]) -> Result<Vec<GeneratedReport>> {
    cases
        .iter()
        .map(|c| {
            Ok(GeneratedReport {
                case_id: c.case_id.clone(),
                report: join_sentences(&model.generate(c)?),
            })
        })
        .collect()
}

pub fn reports_to_string(reports: &[GeneratedReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{}", serde_json::to_string(r)?);
    }
    Ok(out)
}

pub fn parse_reports(text: &str, origin: &str) -> Result<Vec<GeneratedReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| AtagError::Parse {
                path: origin.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_reports(path: impl AsRef<Path>) -> Result<Vec<GeneratedReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
    parse_reports(&text, &path.display().to_string())
}

/// Splits a generated report back into sentences.
pub fn report_sentences(report: &GeneratedReport) -> Vec<Sentence> {
    split_sentences(&report.report)
}
