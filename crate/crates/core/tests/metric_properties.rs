//! Invariants of the tuple-level scores.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atag::lexicon::ExtractionTuple;
use atag::metrics::{mirqi_reference, radrqi, RadRqiConfig, TuplePair};

const CATEGORIES: [&str; 6] = ["opacity", "edema", "nodule", "effusion", "cardiomegaly", "pneumothorax"];
const ATTRS: [&str; 4] = ["left", "right", "mild", "upper lobe"];

fn config(alpha: f64) -> RadRqiConfig {
    RadRqiConfig::new(alpha, CATEGORIES.len(), CATEGORIES.iter().map(|c| (c.to_string(), 1)).collect()).unwrap()
}

fn tuple((cat, positive, mask): (usize, bool, u8)) -> ExtractionTuple {
    if positive {
        let attrs: Vec<&str> = (0..ATTRS.len()).filter(|i| mask & (1 << i) != 0).map(|i| ATTRS[i]).collect();
        ExtractionTuple::positive(CATEGORIES[cat], &attrs)
    } else {
        ExtractionTuple::negative(CATEGORIES[cat])
    }
}

fn report() -> impl Strategy<Value = Vec<ExtractionTuple>> {
    prop::collection::vec((0..CATEGORIES.len(), any::<bool>(), 0u8..16), 0..8)
        .prop_map(|v| v.into_iter().map(tuple).collect())
}

fn pairs() -> impl Strategy<Value = Vec<TuplePair>> {
    prop::collection::vec((report(), report()), 1..6)
}

fn swapped(pairs: &[TuplePair]) -> Vec<TuplePair> {
    pairs.iter().map(|(g, r)| (r.clone(), g.clone())).collect()
}

proptest! {
    #[test]
    fn swapping_sides_swaps_precision_and_recall(pairs in pairs(), alpha in 0.0f64..=1.0) {
        let cfg = config(alpha);
        for f in [radrqi, mirqi_reference] {
            let a = f(&pairs, &cfg).unwrap();
            let b = f(&swapped(&pairs), &cfg).unwrap();
            prop_assert!((a.precision - b.recall).abs() < 1e-12);
            prop_assert!((a.recall - b.precision).abs() < 1e-12);
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn mirqi_is_never_below_radrqi(pair in (report(), report()), alpha in 0.0f64..=1.0) {
        let cfg = config(alpha);
        let one = [pair];
        let r = radrqi(&one, &cfg).unwrap();
        let m = mirqi_reference(&one, &cfg).unwrap();
        prop_assert!(m.precision >= r.precision - 1e-12);
        prop_assert!(m.recall >= r.recall - 1e-12);
    }

    #[test]
    fn scores_stay_in_unit_interval(pairs in pairs(), alpha in 0.0f64..=1.0) {
        let cfg = config(alpha);
        for s in [radrqi(&pairs, &cfg).unwrap(), mirqi_reference(&pairs, &cfg).unwrap()] {
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v), "{v}");
            }
            for c in &s.categories {
                for v in [c.precision, c.recall, c.f1] {
                    prop_assert!((0.0..=1.0).contains(&v), "{v}");
                }
            }
        }
    }
}

/// Category status drawn independently: absent, negative, or positive with attributes.
#[derive(Clone)]
enum Draw {
    Absent,
    Negative,
    Positive(BTreeSet<&'static str>),
}

fn draw_report(rng: &mut ChaCha8Rng) -> Vec<Draw> {
    CATEGORIES
        .iter()
        .map(|_| match rng.random_range(0..3) {
            0 => Draw::Absent,
            1 => Draw::Negative,
            _ => Draw::Positive(ATTRS.iter().copied().filter(|_| rng.random_bool(0.5)).collect()),
        })
        .collect()
}

fn to_tuples(draws: &[Draw]) -> Vec<ExtractionTuple> {
    draws
        .iter()
        .zip(CATEGORIES)
        .filter_map(|(d, c)| match d {
            Draw::Absent => None,
            Draw::Negative => Some(ExtractionTuple::negative(c)),
            Draw::Positive(a) => Some(ExtractionTuple::positive(c, &a.iter().copied().collect::<Vec<_>>())),
        })
        .collect()
}

/// Case precision by direct counting: each positive generated mention has unit
/// mass, of which `(1 - α) + α·J` is true when the reference is also positive.
fn oracle_precision(gen: &[Draw], refs: &[Draw], alpha: f64, count_unmentioned: bool) -> f64 {
    let (mut tp, mut fp) = (0.0, 0.0);
    for (g, r) in gen.iter().zip(refs) {
        match (g, r) {
            (Draw::Positive(a), Draw::Positive(b)) => {
                let union = a.union(b).count();
                let j = if union == 0 { 1.0 } else { a.intersection(b).count() as f64 / union as f64 };
                let credit = (1.0 - alpha) + alpha * j;
                tp += credit;
                fp += 1.0 - credit;
            }
            (Draw::Positive(_), Draw::Negative) => fp += 1.0,
            (Draw::Positive(_), Draw::Absent) if count_unmentioned => fp += 1.0,
            _ => {}
        }
    }
    if tp + fp > 0.0 {
        tp / (tp + fp)
    } else {
        0.0
    }
}

#[test]
fn mirqi_precision_dominates_case_by_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let alpha = 0.5;
    let cfg = config(alpha);
    for case in 0..20 {
        let gen = draw_report(&mut rng);
        let refs = draw_report(&mut rng);
        let one = [(to_tuples(&gen), to_tuples(&refs))];
        let r = radrqi(&one, &cfg).unwrap().precision;
        let m = mirqi_reference(&one, &cfg).unwrap().precision;
        assert!((r - oracle_precision(&gen, &refs, alpha, true)).abs() < 1e-12, "case {case}: radrqi {r}");
        assert!((m - oracle_precision(&gen, &refs, alpha, false)).abs() < 1e-12, "case {case}: mirqi {m}");
        assert!(m >= r, "case {case}: mirqi {m} below radrqi {r}");
    }
}
