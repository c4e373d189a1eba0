//! Attributed abnormality graphs: one abnormality graph whose nodes each own
//! an attribute graph, all with a global node at index 0.

mod build;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AtagError, Result};
use crate::lexicon::{ExtractionTuple, Negation};

pub use build::{build_from_annotations, build_from_reports, build_from_tuples, intersect};
pub use stats::GraphStats;

pub const GRAPH_FORMAT: &str = "atag-graph/1";

/// Placeholder attribute for abnormalities whose descriptors all fall below
/// the attribute threshold.
pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub canonical: String,
    /// Position in the owning graph; the global node holds 0.
    pub index: usize,
    /// Number of cases supporting the node.
    pub frequency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub abnormality: usize,
    pub attribute: usize,
    pub edge: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            abnormality: 3,
            attribute: 2,
            edge: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeGraph {
    pub nodes: Vec<NodeRecord>,
    /// Neighbor lists for nodes `0..=nodes.len()`, without self-loops.
    pub adjacency: Vec<Vec<usize>>,
    /// Pairwise case-level co-occurrence counts, keyed by canonicals.
    pub co_occurrence: Vec<(String, String, usize)>,
}

impl AttributeGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtagStructure {
    pub abnormalities: Vec<NodeRecord>,
    /// Neighbor lists for nodes `0..=abnormalities.len()`, without self-loops.
    pub abnormality_edges: Vec<Vec<usize>>,
    /// `attribute_graphs[i]` belongs to abnormality node `i + 1`.
    pub attribute_graphs: Vec<AttributeGraph>,
    pub thresholds: Thresholds,
    pub co_occurrence: Vec<(String, String, usize)>,
    pub source_cases: usize,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    #[serde(flatten)]
    graph: AtagStructure,
}

/// Binary targets for every node of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTargets {
    /// Length `|A| + 1`; entry 0 is "no finding".
    pub abnormality: Vec<f64>,
    /// Per abnormality, length `|B_i| + 1`; entry 0 is "any attribute".
    pub attributes: Vec<Vec<f64>>,
}

fn check_adjacency(adj: &[Vec<usize>], n: usize, what: &str) -> Result<()> {
    let bad = |m: String| Err(AtagError::GraphFile(format!("{what}: {m}")));
    if adj.len() != n {
        return bad(format!("expected {n} neighbor lists, found {}", adj.len()));
    }
    for (u, list) in adj.iter().enumerate() {
        for &v in list {
            if v >= n {
                return bad(format!("edge {u}-{v} has a missing endpoint"));
            }
            if v == u {
                return bad(format!("self-loop on node {u}"));
            }
            if !adj[v].contains(&u) {
                return bad(format!("adjacency is not symmetric at {u}-{v}"));
            }
        }
        if list.iter().collect::<BTreeSet<_>>().len() != list.len() {
            return bad(format!("duplicate neighbor on node {u}"));
        }
    }
    for v in 1..n {
        if !adj[0].contains(&v) {
            return bad(format!("global node is not connected to node {v}"));
        }
    }
    Ok(())
}

fn check_nodes(nodes: &[NodeRecord], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.index != i + 1 {
            return Err(AtagError::GraphFile(format!(
                "{what}: node `{}` has index {}, expected {}",
                n.canonical,
                n.index,
                i + 1
            )));
        }
        if !seen.insert(&n.canonical) {
            return Err(AtagError::GraphFile(format!("{what}: duplicate node `{}`", n.canonical)));
        }
    }
    Ok(())
}

/// Dense adjacency with self-loops, suitable as an attention mask.
pub fn adjacency_mask(adj: &[Vec<usize>]) -> Array2<bool> {
    let n = adj.len();
    let mut m = Array2::from_elem((n, n), false);
    for (u, list) in adj.iter().enumerate() {
        m[[u, u]] = true;
        for &v in list {
            m[[u, v]] = true;
        }
    }
    m
}

impl AtagStructure {
    pub fn num_abnormalities(&self) -> usize {
        self.abnormalities.len()
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<()> {
        if self.abnormalities.is_empty() {
            return Err(AtagError::GraphFile("graph has no abnormality nodes".into()));
        }
        check_nodes(&self.abnormalities, "abnormality graph")?;
        check_adjacency(&self.abnormality_edges, self.abnormalities.len() + 1, "abnormality graph")?;
        if self.attribute_graphs.len() != self.abnormalities.len() {
            return Err(AtagError::GraphFile(format!(
                "{} abnormalities but {} attribute graphs",
                self.abnormalities.len(),
                self.attribute_graphs.len()
            )));
        }
        for (a, g) in self.abnormalities.iter().zip(&self.attribute_graphs) {
            let what = format!("attribute graph of `{}`", a.canonical);
            if g.nodes.is_empty() {
                return Err(AtagError::GraphFile(format!("{what} is empty")));
            }
            check_nodes(&g.nodes, &what)?;
            check_adjacency(&g.adjacency, g.nodes.len() + 1, &what)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            format: GRAPH_FORMAT.to_string(),
            graph: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("format").and_then(|f| f.as_str()).unwrap_or("<missing>");
        if found != GRAPH_FORMAT {
            return Err(AtagError::Version {
                found: found.to_string(),
                expected: GRAPH_FORMAT.to_string(),
            });
        }
        let file: GraphFile = serde_json::from_value(value)?;
        file.graph.validate()?;
        Ok(file.graph)
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

    /// Hex SHA-256 of the serialized file contents.
    pub fn content_hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }

    pub fn abnormality_index(&self, canonical: &str) -> Option<usize> {
        self.abnormalities
            .iter()
            .find(|n| n.canonical == canonical)
            .map(|n| n.index)
    }

    /// Attention mask of the abnormality graph, self-loops included.
    pub fn abnormality_mask(&self) -> Array2<bool> {
        adjacency_mask(&self.abnormality_edges)
    }

    /// Attention mask of attribute graph `i` (0-based abnormality position).
    pub fn attribute_mask(&self, i: usize) -> Array2<bool> {
        adjacency_mask(&self.attribute_graphs[i].adjacency)
    }

    /// Sorted union of attribute canonicals over all attribute graphs; rows of
    /// the shared attribute embedding table follow this order.
    pub fn attribute_vocabulary(&self) -> Vec<String> {
        let all: BTreeSet<&String> = self
            .attribute_graphs
            .iter()
            .flat_map(|g| g.nodes.iter().map(|n| &n.canonical))
            .collect();
        all.into_iter().cloned().collect()
    }

    /// For attribute graph `i`, the shared-table row of each attribute node.
    pub fn attribute_rows(&self) -> Vec<Vec<usize>> {
        let vocab: BTreeMap<String, usize> = self
            .attribute_vocabulary()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        self.attribute_graphs
            .iter()
            .map(|g| g.nodes.iter().map(|n| vocab[&n.canonical]).collect())
            .collect()
    }

    /// Node targets implied by a case's positive tuples. Tuples naming
    /// abnormalities outside the graph are ignored; the returned flag reports
    /// whether any tuple was ignored.
    pub fn targets(&self, tuples: &[ExtractionTuple]) -> (NodeTargets, bool) {
        let mut abnormality = vec![0.0; self.abnormalities.len() + 1];
        let mut attributes: Vec<Vec<f64>> = self
            .attribute_graphs
            .iter()
            .map(|g| vec![0.0; g.nodes.len() + 1])
            .collect();
        let mut ignored = false;
        for t in tuples.iter().filter(|t| t.negation == Negation::Positive) {
            let Some(idx) = self.abnormality_index(&t.abnormality) else {
                ignored = true;
                continue;
            };
            abnormality[idx] = 1.0;
            let g = &self.attribute_graphs[idx - 1];
            let row = &mut attributes[idx - 1];
            row[0] = 1.0;
            let mut hit = false;
            for n in &g.nodes {
                if t.attributes.contains(&n.canonical) {
                    row[n.index] = 1.0;
                    hit = true;
                }
            }
            if !hit {
                if let Some(n) = g.nodes.iter().find(|n| n.canonical == UNSPECIFIED) {
                    row[n.index] = 1.0;
                }
            }
        }
        if abnormality[1..].iter().all(|&v| v == 0.0) {
            abnormality[0] = 1.0;
        }
        (
            NodeTargets {
                abnormality,
                attributes,
            },
            ignored,
        )
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats::of(self)
    }
}
