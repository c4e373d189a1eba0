//! Deterministic synthetic report corpora.
//!
//! Every textual choice made for a case (which abnormalities are present,
//! their attributes, the template used, an optional negative mention) is also
//! written into the case's feature grid as a sum of fixed random patterns at
//! the abnormality's spatial cell. The text is therefore a function of the
//! features, which is what makes memorization learnable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{split_sentences, ReportCase};
use crate::encoder::visual::VisualFeatureMap;
use crate::error::{AtagError, Result};
use crate::lexicon::{ExtractionTuple, Negation};

const BUNDLED: &str = include_str!("../../data/synthetic_default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAbnormality {
    /// Canonical finding name; also the surface form used in text.
    pub name: String,
    /// Probability that a case shows this abnormality.
    pub prevalence: f64,
    /// Canonical descriptor names to draw attributes from.
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Sentence templates with `{finding}` and `{attributes}` slots.
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub cases: usize,
    pub grid_height: usize,
    pub grid_width: usize,
    /// Width of each spatial feature vector (twice the model dimension).
    pub feature_dim: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_max_attributes")]
    pub max_attributes: usize,
    /// Chance that a case also mentions one absent abnormality as negative.
    #[serde(default)]
    pub negative_mention_rate: f64,
    pub normal_sentences: Vec<String>,
    pub abnormalities: Vec<SyntheticAbnormality>,
}

fn default_noise() -> f64 {
    0.05
}

fn default_max_attributes() -> usize {
    2
}

impl SyntheticSpec {
    /// The desk-scale generator configuration shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled synthetic spec is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| AtagError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtagError::Validation(m.to_string()));
        if self.abnormalities.is_empty() {
            return bad("synthetic spec needs at least one abnormality (K = 0)");
        }
        if self.grid_height == 0 || self.grid_width == 0 {
            return bad("grid dimensions must be positive");
        }
        if self.feature_dim == 0 || self.feature_dim % 2 != 0 {
            return bad("feature_dim must be positive and even");
        }
        if self.normal_sentences.is_empty() {
            return bad("at least one normal sentence is required");
        }
        if !(0.0..=1.0).contains(&self.negative_mention_rate) {
            return bad("negative_mention_rate must lie in [0, 1]");
        }
        for a in &self.abnormalities {
            if !(0.0..=1.0).contains(&a.prevalence) {
                return bad("prevalence must lie in [0, 1]");
            }
            if a.templates.is_empty() || a.templates.iter().any(|t| !t.contains("{finding}")) {
                return bad("every abnormality needs templates containing {finding}");
            }
        }
        Ok(())
    }
}

fn pattern(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn fill(template: &str, finding: &str, attributes: &[String]) -> String {
    let filled = template
        .replace("{attributes}", &attributes.join(" "))
        .replace("{finding}", finding);
    filled.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Patterns {
    finding: Vec<Vec<f64>>,
    negative: Vec<Vec<f64>>,
    template: Vec<Vec<Vec<f64>>>,
    attribute: BTreeMap<String, Vec<f64>>,
    normal: Vec<Vec<f64>>,
}

impl Patterns {
    fn draw(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Self {
        let d = spec.feature_dim;
        let finding = spec.abnormalities.iter().map(|_| pattern(rng, d)).collect();
        let negative = spec.abnormalities.iter().map(|_| pattern(rng, d)).collect();
        let template = spec
            .abnormalities
            .iter()
            .map(|a| a.templates.iter().map(|_| pattern(rng, d)).collect())
            .collect();
        let names: BTreeSet<&String> = spec.abnormalities.iter().flat_map(|a| &a.attributes).collect();
        let attribute = names.into_iter().map(|n| (n.clone(), pattern(rng, d))).collect();
        let normal = spec.normal_sentences.iter().map(|_| pattern(rng, d)).collect();
        Self {
            finding,
            negative,
            template,
            attribute,
            normal,
        }
    }
}

/// Generates `spec.cases` reports. Identical `(spec, seed)` pairs give
/// identical corpora.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<Vec<ReportCase>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = Patterns::draw(spec, &mut rng);
    let cells = spec.grid_height * spec.grid_width;
    let d = spec.feature_dim;
    let cell_of = |k: usize| k % cells;

    let mut out = Vec::with_capacity(spec.cases);
    for idx in 0..spec.cases {
        let mut grid = vec![0.0; cells * d];
        for v in grid.iter_mut() {
            *v = spec.noise * rng.sample::<f64, _>(StandardNormal);
        }
        let mut add = |cell: usize, p: &[f64]| {
            for (g, v) in grid[cell * d..(cell + 1) * d].iter_mut().zip(p) {
                *g += v;
            }
        };

        let mut sentences = Vec::new();
        let mut truth = Vec::new();
        let mut annotations = Vec::new();
        let mut absent = Vec::new();
        for (k, abn) in spec.abnormalities.iter().enumerate() {
            if !rng.random_bool(abn.prevalence) {
                absent.push(k);
                continue;
            }
            let mut attrs: Vec<String> = Vec::new();
            if !abn.attributes.is_empty() && spec.max_attributes > 0 {
                let n = rng.random_range(1..=spec.max_attributes.min(abn.attributes.len()));
                let mut picked = sample(&mut rng, abn.attributes.len(), n).into_vec();
                picked.sort_unstable();
                attrs = picked.into_iter().map(|i| abn.attributes[i].clone()).collect();
            }
            let t = rng.random_range(0..abn.templates.len());
            add(cell_of(k), &patterns.finding[k]);
            add(cell_of(k), &patterns.template[k][t]);
            for a in &attrs {
                add(cell_of(k), &patterns.attribute[a]);
            }
            truth.push(ExtractionTuple {
                abnormality: abn.name.clone(),
                negation: Negation::Positive,
                attributes: attrs.iter().cloned().collect(),
                sentence_index: sentences.len(),
            });
            annotations.push(std::iter::once(abn.name.clone()).chain(attrs.iter().cloned()).collect::<Vec<_>>().join("/"));
            sentences.push(fill(&abn.templates[t], &abn.name, &attrs));
        }
        if sentences.is_empty() {
            let n = rng.random_range(0..spec.normal_sentences.len());
            for cell in 0..cells {
                add(cell, &patterns.normal[n]);
            }
            sentences.push(spec.normal_sentences[n].clone());
            annotations.push("normal".to_string());
        }
        if !absent.is_empty() && rng.random_bool(spec.negative_mention_rate) {
            let k = absent[rng.random_range(0..absent.len())];
            add(cell_of(k), &patterns.negative[k]);
            truth.push(ExtractionTuple {
                abnormality: spec.abnormalities[k].name.clone(),
                negation: Negation::Negative,
                attributes: BTreeSet::new(),
                sentence_index: sentences.len(),
            });
            sentences.push(format!("no {}", spec.abnormalities[k].name));
        }

        let case_id = format!("synth-{seed}-{idx:04}");
        let text = sentences.join(". ") + ".";
        out.push(ReportCase {
            image_refs: vec![format!("{case_id}_frontal"), format!("{case_id}_lateral")],
            case_id,
            findings: split_sentences(&text),
            impression: Vec::new(),
            annotations,
            features: Some(VisualFeatureMap::new(spec.grid_height, spec.grid_width, d, grid)?),
            image: None,
            truth: Some(truth),
        });
    }
    Ok(out)
}
