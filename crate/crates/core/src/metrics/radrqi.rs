//! Tuple-level clinical accuracy with attribute credit.
//!
//! Each report is reduced to one status per abnormality category: positive
//! (with the union of its attribute sets), negative, or not mentioned. A
//! category positive in both reports earns `(1 - α) + α·J` true-positive mass,
//! `J` being the Jaccard overlap of the attribute sets; the missing credit
//! `1 - credit` is charged to both the false-positive and false-negative
//! side, so each positive mention carries unit mass. Categories positive on
//! one side only are false positives or negatives. The MIRQI-style contrast
//! skips categories the other report never mentions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{AtagError, Result};
use crate::lexicon::{ExtractionTuple, Negation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadRqiConfig {
    pub alpha_b: f64,
    pub top_k: usize,
    /// Category frequencies used to pick the top-K categories.
    pub frequencies: Vec<(String, usize)>,
}

impl RadRqiConfig {
    pub fn new(alpha_b: f64, top_k: usize, frequencies: Vec<(String, usize)>) -> Result<Self> {
        let config = Self {
            alpha_b,
            top_k,
            frequencies,
        };
        config.validate()?;
        Ok(config)
    }

    /// Frequencies counted as the number of reports with a positive mention.
    pub fn from_references<'a>(
        alpha_b: f64,
        top_k: usize,
        references: impl IntoIterator<Item = &'a [ExtractionTuple]>,
    ) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for tuples in references {
            for (category, status) in report_status(tuples) {
                if matches!(status, Status::Positive(_)) {
                    *counts.entry(category).or_default() += 1;
                }
            }
        }
        Self::new(alpha_b, top_k, counts.into_iter().collect())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_b) {
            return Err(AtagError::Config(format!("alpha_b = {} outside [0, 1]", self.alpha_b)));
        }
        if self.top_k == 0 {
            return Err(AtagError::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// The `top_k` most frequent categories, ties broken by name.
    pub fn categories(&self) -> BTreeSet<String> {
        let mut ranked: Vec<(String, usize)> =
            self.frequencies.iter().map(|(c, n)| (normalize(c), *n)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.dedup_by(|a, b| a.0 == b.0);
        ranked.into_iter().take(self.top_k).map(|(c, _)| c).collect()
    }
}

fn normalize(category: &str) -> String {
    category.trim().to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Positive(BTreeSet<String>),
    Negative,
}

/// One status per mentioned category. A positive mention anywhere in the
/// report overrides negative ones; attribute sets of positive mentions are
/// merged.
pub fn report_status(tuples: &[ExtractionTuple]) -> BTreeMap<String, Status> {
    let mut out: BTreeMap<String, Status> = BTreeMap::new();
    for t in tuples {
        let key = normalize(&t.abnormality);
        let attrs: BTreeSet<String> = t.attributes.iter().map(|a| normalize(a)).collect();
        match (t.negation, out.get_mut(&key)) {
            (Negation::Positive, Some(Status::Positive(existing))) => existing.extend(attrs),
            (Negation::Positive, _) => {
                out.insert(key, Status::Positive(attrs));
            }
            (Negation::Negative, None) => {
                out.insert(key, Status::Negative);
            }
            (Negation::Negative, Some(_)) => {}
        }
    }
    out
}

/// Jaccard overlap; two empty sets agree fully.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    /// Matched positive categories.
    pub tp_a: f64,
    /// Summed attribute overlap of the matches.
    pub tp_b: f64,
    /// Positive on the generated side only.
    pub fp_mentions: f64,
    /// Positive on the reference side only.
    pub fn_mentions: f64,
}

impl Counts {
    pub fn tp(&self, alpha: f64) -> f64 {
        (1.0 - alpha) * self.tp_a + alpha * self.tp_b
    }

    fn shortfall(&self, alpha: f64) -> f64 {
        self.tp_a - self.tp(alpha)
    }

    pub fn fp(&self, alpha: f64) -> f64 {
        self.fp_mentions + self.shortfall(alpha)
    }

    pub fn fn_(&self, alpha: f64) -> f64 {
        self.fn_mentions + self.shortfall(alpha)
    }

    fn add(&mut self, other: &Counts) {
        self.tp_a += other.tp_a;
        self.tp_b += other.tp_b;
        self.fp_mentions += other.fp_mentions;
        self.fn_mentions += other.fn_mentions;
    }
}

/// Per-category counts for one report pair. With `count_unmentioned` off, a
/// category the other report never mentions contributes nothing.
pub fn count_case(
    generated: &[ExtractionTuple],
    reference: &[ExtractionTuple],
    categories: &BTreeSet<String>,
    count_unmentioned: bool,
) -> BTreeMap<String, Counts> {
    let gen = report_status(generated);
    let refs = report_status(reference);
    let mut out = BTreeMap::new();
    for category in categories {
        let mut c = Counts::default();
        match (gen.get(category), refs.get(category)) {
            (Some(Status::Positive(g)), Some(Status::Positive(r))) => {
                c.tp_a = 1.0;
                c.tp_b = jaccard(g, r);
            }
            (Some(Status::Positive(_)), Some(Status::Negative)) => c.fp_mentions = 1.0,
            (Some(Status::Negative), Some(Status::Positive(_))) => c.fn_mentions = 1.0,
            (Some(Status::Positive(_)), None) if count_unmentioned => c.fp_mentions = 1.0,
            (None, Some(Status::Positive(_))) if count_unmentioned => c.fn_mentions = 1.0,
            _ => {}
        }
        out.insert(category.clone(), c);
    }
    out
}

/// Precision, recall and F1 with every undefined ratio set to zero.
pub fn prf(tp: f64, fp: f64, fn_: f64) -> (f64, f64, f64) {
    let ratio = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    (p, r, ratio(2.0 * p * r, p + r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub category: String,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadRqiScore {
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hits: usize,
    pub categories: Vec<CategoryScore>,
}

/// Pairs of (generated, reference) tuples, one per case.
pub type TuplePair = (Vec<ExtractionTuple>, Vec<ExtractionTuple>);

fn score(pairs: &[TuplePair], config: &RadRqiConfig, count_unmentioned: bool) -> Result<RadRqiScore> {
    config.validate()?;
    let alpha = config.alpha_b;
    let categories = config.categories();
    let mut totals: BTreeMap<String, Counts> = categories.iter().map(|c| (c.clone(), Counts::default())).collect();
    for (g, r) in pairs {
        for (category, c) in count_case(g, r, &categories, count_unmentioned) {
            totals.get_mut(&category).expect("category from the same set").add(&c);
        }
    }
    let mut pooled = Counts::default();
    let mut per_category = Vec::with_capacity(totals.len());
    for (category, c) in &totals {
        pooled.add(c);
        let (tp, fp, fn_) = (c.tp(alpha), c.fp(alpha), c.fn_(alpha));
        let (precision, recall, f1) = prf(tp, fp, fn_);
        per_category.push(CategoryScore {
            category: category.clone(),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    let (tp, fp, fn_) = (pooled.tp(alpha), pooled.fp(alpha), pooled.fn_(alpha));
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(RadRqiScore {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
        hits: per_category.iter().filter(|c| c.f1 > 0.0).count(),
        categories: per_category,
    })
}

/// Micro-averaged score over the top-K categories, counting categories one
/// report leaves unmentioned.
pub fn radrqi(pairs: &[TuplePair], config: &RadRqiConfig) -> Result<RadRqiScore> {
    score(pairs, config, true)
}

/// The same score restricted to categories both reports mention.
pub fn mirqi_reference(pairs: &[TuplePair], config: &RadRqiConfig) -> Result<RadRqiScore> {
    score(pairs, config, false)
}
