//! Observation-level clinical efficacy from a keyword labeler.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::radrqi::prf;
use crate::corpus::{tokenize, Sentence};
use crate::lexicon::{Mention, NegationRules, Span};

pub const NO_FINDING: &str = "No Finding";
pub const SUPPORT_DEVICES: &str = "Support Devices";

/// The fourteen observations, in their conventional order.
pub const OBSERVATIONS: [&str; 14] = [
    NO_FINDING,
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Lesion",
    "Lung Opacity",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    SUPPORT_DEVICES,
];

pub const FIVE: [&str; 5] = ["Atelectasis", "Cardiomegaly", "Consolidation", "Edema", "Pleural Effusion"];

const PHRASES: &[(&str, &[&str])] = &[
    (
        "Enlarged Cardiomediastinum",
        &[
            "enlarged cardiomediastinum",
            "cardiomediastinal enlargement",
            "widened mediastinum",
            "mediastinal widening",
            "mediastinal enlargement",
        ],
    ),
    (
        "Cardiomegaly",
        &[
            "cardiomegaly",
            "enlarged heart",
            "heart is enlarged",
            "cardiac enlargement",
            "enlarged cardiac silhouette",
            "heart size is enlarged",
        ],
    ),
    (
        "Lung Lesion",
        &["nodule", "nodules", "mass", "masses", "lesion", "lesions", "granuloma", "granulomas", "neoplasm", "tumor"],
    ),
    (
        "Lung Opacity",
        &[
            "opacity",
            "opacities",
            "opacification",
            "infiltrate",
            "infiltrates",
            "airspace disease",
            "haziness",
            "scarring",
            "density",
            "densities",
        ],
    ),
    ("Edema", &["edema", "pulmonary edema", "vascular congestion", "congestive heart failure", "chf"]),
    ("Consolidation", &["consolidation", "consolidations", "consolidative"]),
    ("Pneumonia", &["pneumonia", "infection", "infectious process"]),
    ("Atelectasis", &["atelectasis", "atelectatic", "collapse"]),
    ("Pneumothorax", &["pneumothorax", "pneumothoraces"]),
    ("Pleural Effusion", &["pleural effusion", "pleural effusions", "effusion", "effusions", "pleural fluid"]),
    ("Pleural Other", &["pleural thickening", "blunting", "pleural scarring", "fibrothorax"]),
    ("Fracture", &["fracture", "fractures", "fractured"]),
    (
        SUPPORT_DEVICES,
        &[
            "pacemaker", "catheter", "picc", "line", "tube", "clips", "wires", "sternotomy", "stent", "device",
            "devices", "hardware", "port",
        ],
    ),
];

/// Phrase-list labeler sharing the lexicon's negation rules. Uncertain
/// mentions do not make an observation positive.
#[derive(Debug, Clone)]
pub struct KeywordLabeler {
    phrases: Vec<(String, Vec<Vec<String>>)>,
    rules: NegationRules,
}

impl Default for KeywordLabeler {
    fn default() -> Self {
        Self::bundled()
    }
}

impl KeywordLabeler {
    pub fn bundled() -> Self {
        Self {
            phrases: PHRASES
                .iter()
                .map(|(obs, list)| (obs.to_string(), list.iter().map(|p| tokenize(p)).collect()))
                .collect(),
            rules: NegationRules::default(),
        }
    }

    /// Observations with at least one positive mention; No Finding is
    /// positive when nothing but support devices is.
    pub fn label(&self, sentences: &[Sentence]) -> BTreeSet<String> {
        let mut positive = BTreeSet::new();
        for sentence in sentences {
            for (obs, phrases) in &self.phrases {
                let hit = phrases.iter().any(|p| {
                    (0..sentence.len().saturating_sub(p.len() - 1)).any(|s| {
                        sentence[s..s + p.len()] == p[..]
                            && self.rules.classify(sentence, Span::new(s, s + p.len())) == Mention::Positive
                    })
                });
                if hit {
                    positive.insert(obs.clone());
                }
            }
        }
        if positive.iter().all(|o| o == SUPPORT_DEVICES) {
            positive.insert(NO_FINDING.to_string());
        }
        positive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeScore {
    pub ce5: SubsetScore,
    pub ce13: SubsetScore,
    pub ce14: SubsetScore,
    /// Observations with non-zero F1.
    pub hits: usize,
    pub per_observation: Vec<(String, f64)>,
}

/// Micro-averaged scores over the five-observation subset, the thirteen
/// observations other than No Finding, and all fourteen.
pub fn ce_scores(generated: &[BTreeSet<String>], reference: &[BTreeSet<String>]) -> CeScore {
    let mut counts = [[0usize; 3]; 14];
    for (g, r) in generated.iter().zip(reference) {
        for (k, obs) in OBSERVATIONS.iter().enumerate() {
            match (g.contains(*obs), r.contains(*obs)) {
                (true, true) => counts[k][0] += 1,
                (true, false) => counts[k][1] += 1,
                (false, true) => counts[k][2] += 1,
                _ => {}
            }
        }
    }
    let subset = |keep: &dyn Fn(&str) -> bool| {
        let mut t = [0usize; 3];
        for (k, obs) in OBSERVATIONS.iter().enumerate() {
            if keep(obs) {
                for j in 0..3 {
                    t[j] += counts[k][j];
                }
            }
        }
        let (precision, recall, f1) = prf(t[0] as f64, t[1] as f64, t[2] as f64);
        SubsetScore { precision, recall, f1 }
    };
    let per_observation: Vec<(String, f64)> = OBSERVATIONS
        .iter()
        .zip(&counts)
        .map(|(obs, c)| (obs.to_string(), prf(c[0] as f64, c[1] as f64, c[2] as f64).2))
        .collect();
    CeScore {
        ce5: subset(&|o| FIVE.contains(&o)),
        ce13: subset(&|o| o != NO_FINDING),
        ce14: subset(&|_| true),
        hits: per_observation.iter().filter(|(_, f)| *f > 0.0).count(),
        per_observation,
    }
}
