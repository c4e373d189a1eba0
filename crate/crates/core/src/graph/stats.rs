use std::collections::BTreeSet;
use std::fmt;

use super::{AtagStructure, UNSPECIFIED};

/// Node and edge counts plus per-abnormality attribute-count summary.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub abnormalities: usize,
    /// Distinct attribute canonicals over all attribute graphs, placeholder
    /// excluded.
    pub attributes: usize,
    pub abnormality_edges: usize,
    pub attribute_edges: usize,
    pub max_attributes: usize,
    pub min_attributes: usize,
    pub mean_attributes: f64,
    /// Population standard deviation.
    pub std_attributes: f64,
}

fn edge_count(adj: &[Vec<usize>]) -> usize {
    adj.iter().map(Vec::len).sum::<usize>() / 2
}

impl GraphStats {
    pub fn of(g: &AtagStructure) -> Self {
        let counts: Vec<usize> = g.attribute_graphs.iter().map(|b| b.nodes.len()).collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<usize>() as f64 / n;
        let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
        let distinct: BTreeSet<&String> = g
            .attribute_graphs
            .iter()
            .flat_map(|b| b.nodes.iter().map(|x| &x.canonical))
            .filter(|c| c.as_str() != UNSPECIFIED)
            .collect();
        Self {
            abnormalities: g.abnormalities.len(),
            attributes: distinct.len(),
            abnormality_edges: edge_count(&g.abnormality_edges),
            attribute_edges: g.attribute_graphs.iter().map(|b| edge_count(&b.adjacency)).sum(),
            max_attributes: counts.iter().copied().max().unwrap_or(0),
            min_attributes: counts.iter().copied().min().unwrap_or(0),
            mean_attributes: mean,
            std_attributes: var.sqrt(),
        }
    }
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "abnormalities={}", self.abnormalities)?;
        writeln!(f, "attributes={}", self.attributes)?;
        writeln!(f, "abnormality_edges={}", self.abnormality_edges)?;
        writeln!(f, "attribute_edges={}", self.attribute_edges)?;
        writeln!(
            f,
            "attributes_per_abnormality max/min/avg/std={}/{}/{:.1}/{:.1}",
            self.max_attributes, self.min_attributes, self.mean_attributes, self.std_attributes
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::graph::{build_from_tuples, Thresholds};
    use crate::lexicon::ExtractionTuple;

    #[test]
    fn summary_counts() {
        let cases = vec![
            vec![ExtractionTuple::positive("a", &["x", "y", "z"]), ExtractionTuple::positive("b", &["x"])],
        ];
        let th = Thresholds {
            abnormality: 1,
            attribute: 1,
            edge: 1,
        };
        let s = build_from_tuples(&cases, th).unwrap().stats();
        assert_eq!((s.abnormalities, s.attributes), (2, 3));
        assert_eq!((s.max_attributes, s.min_attributes), (3, 1));
        assert_eq!(s.mean_attributes, 2.0);
        assert_eq!(s.std_attributes, 1.0);
        // global edges (2) + a-b
        assert_eq!(s.abnormality_edges, 3);
        // globals (3 + 1) + x-y, x-z, y-z
        assert_eq!(s.attribute_edges, 7);
    }
}
