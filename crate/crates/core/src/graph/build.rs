use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use super::{AtagStructure, AttributeGraph, NodeRecord, Thresholds, UNSPECIFIED};
use crate::corpus::ReportCase;
use crate::error::{AtagError, Result};
use crate::lexicon::{ExtractionTuple, Extractor, Negation};

type PairCounts = BTreeMap<(String, String), usize>;

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn count_pairs<'a>(items: impl IntoIterator<Item = &'a String>, counts: &mut PairCounts) {
    let items: Vec<&String> = items.into_iter().collect();
    for (i, a) in items.iter().enumerate() {
        for b in &items[i + 1..] {
            *counts.entry(pair_key(a, b)).or_default() += 1;
        }
    }
}

struct Assembled {
    nodes: Vec<NodeRecord>,
    adjacency: Vec<Vec<usize>>,
    co_occurrence: Vec<(String, String, usize)>,
}

/// Orders nodes by frequency then name, connects the global node to all and
/// joins every pair accepted by `edge`.
fn assemble(mut nodes: Vec<(String, usize)>, pairs: &PairCounts, edge: impl Fn(&str, &str) -> bool) -> Assembled {
    nodes.sort_by(|a, b| (Reverse(a.1), &a.0).cmp(&(Reverse(b.1), &b.0)));
    let records: Vec<NodeRecord> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, (canonical, frequency))| NodeRecord {
            canonical,
            index: i + 1,
            frequency,
        })
        .collect();
    let n = records.len() + 1;
    let mut adjacency = vec![Vec::new(); n];
    for r in &records {
        adjacency[0].push(r.index);
        adjacency[r.index].push(0);
    }
    for (i, a) in records.iter().enumerate() {
        for b in &records[i + 1..] {
            if edge(&a.canonical, &b.canonical) {
                adjacency[a.index].push(b.index);
                adjacency[b.index].push(a.index);
            }
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_unstable();
    }
    let names: BTreeSet<&String> = records.iter().map(|r| &r.canonical).collect();
    let co_occurrence = pairs
        .iter()
        .filter(|((a, b), _)| names.contains(a) && names.contains(b))
        .map(|((a, b), &c)| (a.clone(), b.clone(), c))
        .collect();
    Assembled {
        nodes: records,
        adjacency,
        co_occurrence,
    }
}

fn placeholder() -> Vec<(String, usize)> {
    vec![(UNSPECIFIED.to_string(), 0)]
}

/// Builds the graph from per-case tuple lists; negative tuples are ignored.
pub fn build_from_tuples(per_case: &[Vec<ExtractionTuple>], thresholds: Thresholds) -> Result<AtagStructure> {
    if thresholds.abnormality == 0 || thresholds.attribute == 0 || thresholds.edge == 0 {
        return Err(AtagError::Precondition("frequency thresholds must be at least 1".into()));
    }
    let mut abn_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut attr_freq: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut abn_pairs = PairCounts::new();
    let mut attr_pairs: BTreeMap<String, PairCounts> = BTreeMap::new();

    for tuples in per_case {
        let mut case: BTreeMap<&String, BTreeSet<&String>> = BTreeMap::new();
        for t in tuples.iter().filter(|t| t.negation == Negation::Positive) {
            case.entry(&t.abnormality).or_default().extend(t.attributes.iter());
        }
        for (a, attrs) in &case {
            *abn_freq.entry((*a).clone()).or_default() += 1;
            let f = attr_freq.entry((*a).clone()).or_default();
            for d in attrs {
                *f.entry((*d).clone()).or_default() += 1;
            }
            count_pairs(attrs.iter().copied(), attr_pairs.entry((*a).clone()).or_default());
        }
        count_pairs(case.keys().copied(), &mut abn_pairs);
    }
    if abn_freq.is_empty() {
        return Err(AtagError::Construction("no case yields any positive finding".into()));
    }

    let retained: Vec<(String, usize)> = abn_freq
        .iter()
        .filter(|(_, &f)| f >= thresholds.abnormality)
        .map(|(a, &f)| (a.clone(), f))
        .collect();
    if retained.is_empty() {
        return Err(AtagError::Construction(format!(
            "no finding reaches the abnormality threshold {}",
            thresholds.abnormality
        )));
    }
    let edge_ok = |pairs: &PairCounts, a: &str, b: &str| {
        pairs.get(&pair_key(a, b)).copied().unwrap_or(0) >= thresholds.edge
    };
    let top = assemble(retained, &abn_pairs, |a, b| edge_ok(&abn_pairs, a, b));

    let empty = PairCounts::new();
    let attribute_graphs = top
        .nodes
        .iter()
        .map(|a| {
            let mut attrs: Vec<(String, usize)> = attr_freq
                .get(&a.canonical)
                .map(|m| {
                    m.iter()
                        .filter(|(_, &f)| f >= thresholds.attribute)
                        .map(|(d, &f)| (d.clone(), f))
                        .collect()
                })
                .unwrap_or_default();
            if attrs.is_empty() {
                attrs = placeholder();
            }
            let pairs = attr_pairs.get(&a.canonical).unwrap_or(&empty);
            let g = assemble(attrs, pairs, |x, y| edge_ok(pairs, x, y));
            AttributeGraph {
                nodes: g.nodes,
                adjacency: g.adjacency,
                co_occurrence: g.co_occurrence,
            }
        })
        .collect();

    Ok(AtagStructure {
        abnormalities: top.nodes,
        abnormality_edges: top.adjacency,
        attribute_graphs,
        thresholds,
        co_occurrence: top.co_occurrence,
        source_cases: per_case.len(),
    })
}

/// Builds the graph from the cases' annotation strings.
pub fn build_from_annotations(cases: &[ReportCase], extractor: &Extractor, thresholds: Thresholds) -> Result<AtagStructure> {
    let per_case: Vec<Vec<ExtractionTuple>> = cases.iter().map(|c| extractor.case_annotations(c)).collect();
    build_from_tuples(&per_case, thresholds)
}

/// Builds the graph from positive tuples extracted from findings sections.
pub fn build_from_reports(cases: &[ReportCase], extractor: &Extractor, thresholds: Thresholds) -> Result<AtagStructure> {
    let per_case: Vec<Vec<ExtractionTuple>> = cases.iter().map(|c| extractor.report(&c.findings)).collect();
    build_from_tuples(&per_case, thresholds)
}

fn shared_nodes(a: &[NodeRecord], b: &[NodeRecord]) -> Vec<(String, usize)> {
    a.iter()
        .filter_map(|x| {
            b.iter()
                .find(|y| y.canonical == x.canonical)
                .map(|y| (x.canonical.clone(), x.frequency.min(y.frequency)))
        })
        .collect()
}

fn has_edge(nodes: &[NodeRecord], adj: &[Vec<usize>], a: &str, b: &str) -> bool {
    let idx = |s: &str| nodes.iter().find(|n| n.canonical == s).map(|n| n.index);
    matches!((idx(a), idx(b)), (Some(i), Some(j)) if adj[i].contains(&j))
}

fn shared_counts(a: &[(String, String, usize)], b: &[(String, String, usize)]) -> PairCounts {
    let other: BTreeMap<(&String, &String), usize> = b.iter().map(|(x, y, c)| ((x, y), *c)).collect();
    a.iter()
        .filter_map(|(x, y, c)| other.get(&(x, y)).map(|d| ((x.clone(), y.clone()), (*c).min(*d))))
        .collect()
}

/// Keeps the abnormalities, attributes and edges present in both graphs.
pub fn intersect(g1: &AtagStructure, g2: &AtagStructure) -> Result<AtagStructure> {
    let shared = shared_nodes(&g1.abnormalities, &g2.abnormalities);
    if shared.is_empty() {
        return Err(AtagError::Construction("graphs share no abnormality".into()));
    }
    let pairs = shared_counts(&g1.co_occurrence, &g2.co_occurrence);
    let top = assemble(shared, &pairs, |a, b| {
        has_edge(&g1.abnormalities, &g1.abnormality_edges, a, b)
            && has_edge(&g2.abnormalities, &g2.abnormality_edges, a, b)
    });
    let sub = |g: &AtagStructure, name: &str| {
        let i = g.abnormality_index(name).expect("shared abnormality") - 1;
        g.attribute_graphs[i].clone()
    };
    let attribute_graphs = top
        .nodes
        .iter()
        .map(|a| {
            let (b1, b2) = (sub(g1, &a.canonical), sub(g2, &a.canonical));
            let mut attrs = shared_nodes(&b1.nodes, &b2.nodes);
            if attrs.is_empty() {
                attrs = placeholder();
            }
            let pairs = shared_counts(&b1.co_occurrence, &b2.co_occurrence);
            let g = assemble(attrs, &pairs, |x, y| {
                has_edge(&b1.nodes, &b1.adjacency, x, y) && has_edge(&b2.nodes, &b2.adjacency, x, y)
            });
            AttributeGraph {
                nodes: g.nodes,
                adjacency: g.adjacency,
                co_occurrence: g.co_occurrence,
            }
        })
        .collect();
    Ok(AtagStructure {
        abnormalities: top.nodes,
        abnormality_edges: top.adjacency,
        attribute_graphs,
        thresholds: Thresholds {
            abnormality: g1.thresholds.abnormality.max(g2.thresholds.abnormality),
            attribute: g1.thresholds.attribute.max(g2.thresholds.attribute),
            edge: g1.thresholds.edge.max(g2.thresholds.edge),
        },
        co_occurrence: top.co_occurrence,
        source_cases: g1.source_cases.min(g2.source_cases),
    })
}
