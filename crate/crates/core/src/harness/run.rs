//! End-to-end pipeline and the run directory it writes.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::model::{generate_reports, report_sentences, reports_to_string, Checkpoint, GeneratedReport, Model};
use super::train::{case_tuples, train};
use crate::corpus::{generate_synthetic_corpus, load_corpus, CorpusFormat, ReportCase, SyntheticSpec};
use crate::error::{AtagError, Result};
use crate::graph::{build_from_tuples, AtagStructure};
use crate::lexicon::Extractor;
use crate::metrics::{evaluate, EvalCase, KeywordLabeler, RadRqiConfig, ScoreReport};

pub const MANIFEST_FORMAT: &str = "atag-run/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

/// Index of every artifact in a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_hash: String,
    pub graph_hash: Option<String>,
    pub files: Vec<ManifestEntry>,
}

/// A directory that records each file it writes in `manifest.json`.
#[derive(Debug)]
pub struct RunDirectory {
    root: PathBuf,
    manifest: Manifest,
}

impl RunDirectory {
    pub fn create(root: impl AsRef<Path>, config_hash: &str) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| AtagError::io(&root, e))?;
        Ok(Self {
            root,
            manifest: Manifest {
                format: MANIFEST_FORMAT.into(),
                config_hash: config_hash.into(),
                graph_hash: None,
                files: Vec::new(),
            },
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_graph_hash(&mut self, hash: String) {
        self.manifest.graph_hash = Some(hash);
    }

    pub fn write(&mut self, name: &str, kind: &str, contents: &str) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| AtagError::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| AtagError::io(&path, e))?;
        self.manifest.files.retain(|f| f.path != name);
        self.manifest.files.push(ManifestEntry {
            path: name.into(),
            kind: kind.into(),
            sha256: hex::encode(Sha256::digest(contents.as_bytes())),
        });
        Ok(path)
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish(self) -> Result<Manifest> {
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| AtagError::io(&path, e))?;
        Ok(self.manifest)
    }
}

/// Training and evaluation cases.
#[derive(Debug, Clone)]
pub struct Corpora {
    pub train: Vec<ReportCase>,
    pub eval: Vec<ReportCase>,
}

/// Loads the configured corpora, or generates the synthetic one.
pub fn load_corpora(config: &RunConfig) -> Result<Corpora> {
    let train = match &config.corpus {
        Some(path) => load_corpus(path, CorpusFormat::JsonLines)?,
        None => {
            let mut spec = match &config.synthetic_spec {
                Some(path) => SyntheticSpec::load(path)?,
                None => SyntheticSpec::bundled(),
            };
            spec.cases = config.synthetic_cases;
            spec.feature_dim = 2 * config.dim;
            generate_synthetic_corpus(&spec, config.synthetic_seed)?
        }
    };
    let eval = match &config.eval_corpus {
        Some(path) => load_corpus(path, CorpusFormat::JsonLines)?,
        None => train.clone(),
    };
    Ok(Corpora { train, eval })
}

/// Loads the configured graph or builds one from the training labels.
pub fn resolve_graph(config: &RunConfig, train: &[ReportCase], extractor: &Extractor) -> Result<AtagStructure> {
    match &config.graph {
        Some(path) => AtagStructure::load(path),
        None => {
            let tuples: Vec<_> = train.iter().map(|c| case_tuples(c, extractor)).collect();
            build_from_tuples(&tuples, config.thresholds())
        }
    }
}

/// RadRQI categories ranked by graph node frequency.
pub fn radrqi_config(config: &RunConfig, graph: &AtagStructure) -> Result<RadRqiConfig> {
    let freq = graph.abnormalities.iter().map(|n| (n.canonical.clone(), n.frequency)).collect();
    RadRqiConfig::new(config.alpha_b, config.top_k, freq)
}

/// Pairs generated reports with references by case id.
pub fn pair_reports(references: &[ReportCase], generated: &[GeneratedReport]) -> Result<Vec<EvalCase>> {
    let by_id: HashMap<&str, &GeneratedReport> = generated.iter().map(|g| (g.case_id.as_str(), g)).collect();
    if by_id.len() != generated.len() {
        return Err(AtagError::Validation("generated reports repeat a case id".into()));
    }
    let mut out = Vec::with_capacity(references.len());
    for r in references {
        let g = by_id
            .get(r.case_id.as_str())
            .ok_or_else(|| AtagError::Validation(format!("no generated report for case `{}`", r.case_id)))?;
        out.push(EvalCase {
            case_id: r.case_id.clone(),
            generated: report_sentences(g),
            reference: r.report(),
        });
    }
    if out.len() != generated.len() {
        return Err(AtagError::Validation("generated reports name cases missing from the reference corpus".into()));
    }
    Ok(out)
}

pub fn score_reports(
    references: &[ReportCase],
    generated: &[GeneratedReport],
    extractor: &Extractor,
    radrqi: &RadRqiConfig,
) -> Result<ScoreReport> {
    let cases = pair_reports(references, generated)?;
    evaluate(&cases, extractor, &KeywordLabeler::bundled(), radrqi)
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub graph: AtagStructure,
    pub checkpoint: Checkpoint,
    pub reports: Vec<GeneratedReport>,
    pub scores: ScoreReport,
    pub manifest: Manifest,
}

/// Build graph, train, generate and evaluate, writing every artifact under
/// `out_dir`.
pub fn run_pipeline(config: &RunConfig, out_dir: impl AsRef<Path>) -> Result<PipelineResult> {
    config.validate()?;
    let extractor = Extractor::bundled();
    let corpora = load_corpora(config)?;
    let graph = resolve_graph(config, &corpora.train, &extractor)?;
    let mut dir = RunDirectory::create(out_dir, &config.hash())?;
    dir.set_graph_hash(graph.content_hash()?);
    dir.write("config.toml", "config", &config.to_toml()?)?;
    dir.write("graph.json", "graph", &graph.to_json()?)?;

    let trained = train(config, &graph, &corpora.train, &extractor)?;
    let checkpoint = Checkpoint::new(config, &graph, trained)?;
    dir.write("checkpoint.json", "checkpoint", &checkpoint.to_json()?)?;

    let model = Model::new(checkpoint.clone(), &graph)?;
    let reports = generate_reports(&model, &corpora.eval)?;
    dir.write("reports.jsonl", "reports", &reports_to_string(&reports)?)?;

    let scores = score_reports(&corpora.eval, &reports, &extractor, &radrqi_config(config, &graph)?)?;
    dir.write("scores.txt", "scores", &scores.to_score_file())?;
    let manifest = dir.finish()?;
    Ok(PipelineResult {
        graph,
        checkpoint,
        reports,
        scores,
        manifest,
    })
}
