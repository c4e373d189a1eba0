//! Desk-scale reproduction studies: gate ablation and graph size.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::{GateSetting, RunConfig};
use super::model::{generate_reports, Checkpoint, Model};
use super::run::{load_corpora, radrqi_config, resolve_graph, score_reports, RunDirectory};
use super::train::train;
use crate::error::{AtagError, Result};
use crate::generator::ContextSource;
use crate::lexicon::Extractor;
use crate::metrics::ScoreReport;

/// Seeds used when a study is run without explicit ones.
pub const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    GateAblation,
    GraphSize,
}

impl FromStr for Study {
    type Err = AtagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gate-ablation" => Ok(Study::GateAblation),
            "graph-size" => Ok(Study::GraphSize),
            other => Err(AtagError::Config(format!(
                "unknown study `{other}`; expected gate-ablation or graph-size"
            ))),
        }
    }
}

impl Study {
    pub fn id(&self) -> &'static str {
        match self {
            Study::GateAblation => "gate-ablation",
            Study::GraphSize => "graph-size",
        }
    }

    /// Row labels with the config each row trains.
    pub fn variants(&self, base: &RunConfig) -> Vec<(String, RunConfig)> {
        match self {
            Study::GateAblation => [
                ("base", ContextSource::Visual, GateSetting::Disabled),
                ("+ATAG", ContextSource::Atag, GateSetting::Disabled),
                ("+ATAG+GATE", ContextSource::Atag, GateSetting::Learned),
            ]
            .into_iter()
            .map(|(label, context, gate)| {
                let mut c = base.clone();
                c.context = context;
                c.gate = gate;
                (label.to_string(), c)
            })
            .collect(),
            Study::GraphSize => [2, 3, 4]
                .into_iter()
                .map(|t| {
                    let mut c = base.clone();
                    c.graph = None;
                    c.abnormality_threshold = t;
                    (format!("threshold={t}"), c)
                })
                .collect(),
        }
    }
}

/// Columns reported for every row.
pub const COLUMNS: [&str; 9] = [
    "ce5", "ce13", "ce14", "ce_hits", "radrqi_topk", "radrqi_hits", "mirqi_f1", "bleu4", "rouge_l",
];

fn column_values(s: &ScoreReport) -> [f64; 9] {
    [
        s.ce.ce5.f1,
        s.ce.ce13.f1,
        s.ce.ce14.f1,
        s.ce.hits as f64,
        s.radrqi.f1,
        s.radrqi.hits as f64,
        s.mirqi.f1,
        s.bleu[3],
        s.rouge_l,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub label: String,
    pub abnormalities: usize,
    pub attributes: usize,
    /// Mean and population standard deviation over seeds, one per column.
    pub values: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub study: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    /// Tab-separated table with a header line.
    pub fn to_text(&self) -> String {
        let mut out = format!("# study={} seeds={:?}\nrow\tabnormalities\tattributes", self.study, self.seeds);
        for c in COLUMNS {
            let _ = write!(out, "\t{c}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}\t{}\t{}", r.label, r.abnormalities, r.attributes);
            for (m, s) in &r.values {
                let _ = write!(out, "\t{m:.4}±{s:.4}");
            }
            out.push('\n');
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains and scores every row of `study` once per seed. Without a separate
/// evaluation corpus the last fifth of the training cases is held out.
/// Per-seed score files and the table land in `out_dir` when given.
pub fn reproduce(study: Study, base: &RunConfig, seeds: &[u64], out_dir: Option<&Path>) -> Result<StudyTable> {
    if seeds.is_empty() {
        return Err(AtagError::Config("a study needs at least one seed".into()));
    }
    base.validate()?;
    let extractor = Extractor::bundled();
    let mut corpora = load_corpora(base)?;
    if base.eval_corpus.is_none() {
        let held = (corpora.train.len() / 5).max(1);
        if held >= corpora.train.len() {
            return Err(AtagError::Precondition("corpus too small to hold out evaluation cases".into()));
        }
        corpora.eval = corpora.train.split_off(corpora.train.len() - held);
    }
    let mut dir = out_dir.map(|d| RunDirectory::create(d, &base.hash())).transpose()?;
    let mut rows = Vec::new();
    for (label, config) in study.variants(base) {
        let graph = resolve_graph(&config, &corpora.train, &extractor)?;
        let stats = graph.stats();
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut c = config.clone();
            c.seed = seed;
            let trained = train(&c, &graph, &corpora.train, &extractor)?;
            let model = Model::new(Checkpoint::new(&c, &graph, trained)?, &graph)?;
            let reports = generate_reports(&model, &corpora.eval)?;
            let scores = score_reports(&corpora.eval, &reports, &extractor, &radrqi_config(&c, &graph)?)?;
            if let Some(d) = dir.as_mut() {
                d.write(&format!("{label}/seed{seed}/scores.txt"), "scores", &scores.to_score_file())?;
            }
            per_seed.push(column_values(&scores));
        }
        let values = (0..COLUMNS.len())
            .map(|k| mean_std(&per_seed.iter().map(|v| v[k]).collect::<Vec<_>>()))
            .collect();
        rows.push(StudyRow {
            label,
            abnormalities: stats.abnormalities,
            attributes: stats.attributes,
            values,
        });
    }
    let table = StudyTable {
        study: study.id().into(),
        seeds: seeds.to_vec(),
        rows,
    };
    if let Some(mut d) = dir {
        d.write("table.tsv", "table", &table.to_text())?;
        d.finish()?;
    }
    Ok(table)
}
