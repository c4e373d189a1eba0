use ndarray::Array2;

use crate::autodiff::{Tape, Var};
use crate::error::{AtagError, Result};
use crate::graph::NodeTargets;

/// `(R − r) / r` for a label present in `r` of `R` reports.
pub fn positive_weight(total: usize, with_label: usize) -> Result<f64> {
    if with_label == 0 {
        return Err(AtagError::Validation(
            "an abnormality appears in no training report; raise the abnormality threshold or rebuild the graph on this corpus".into(),
        ));
    }
    if with_label >= total {
        return Err(AtagError::Validation(
            "an abnormality appears in every training report, so its weight is zero; add reports without it or drop it from the graph".into(),
        ));
    }
    Ok((total - with_label) as f64 / with_label as f64)
}

/// Normalizes weights to unit Euclidean norm.
pub fn beta_weights(w: &[f64]) -> Result<Vec<f64>> {
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(AtagError::Validation("weights must be finite and non-negative".into()));
    }
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(AtagError::Validation("at least one weight must be positive".into()));
    }
    Ok(w.iter().map(|v| v / norm).collect())
}

/// Positive-class multipliers (index 0 is the global node) and the
/// normalized per-abnormality mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub positive: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LossWeights {
    /// `counts[0]` counts normal reports, `counts[i]` reports containing
    /// abnormality `i`. A degenerate global count falls back to weight 1.
    pub fn from_counts(total: usize, counts: &[usize]) -> Result<Self> {
        if counts.len() < 2 {
            return Err(AtagError::Validation("need counts for the global node and one abnormality".into()));
        }
        let global = positive_weight(total, counts[0]).unwrap_or(1.0);
        let per: Vec<f64> = counts[1..]
            .iter()
            .map(|&c| positive_weight(total, c))
            .collect::<Result<_>>()?;
        let beta = beta_weights(&per)?;
        let mut positive = vec![global];
        positive.extend(per);
        Ok(Self { positive, beta })
    }

    pub fn from_targets(targets: &[NodeTargets]) -> Result<Self> {
        let Some(first) = targets.first() else {
            return Err(AtagError::Validation("no training targets".into()));
        };
        let mut counts = vec![0usize; first.abnormality.len()];
        for t in targets {
            for (c, &y) in counts.iter_mut().zip(&t.abnormality) {
                if y > 0.5 {
                    *c += 1;
                }
            }
        }
        Self::from_counts(targets.len(), &counts)
    }
}

fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column")
}

/// `β_A · L_A + (1 − β_A) · Σ_i β_i · L_Bi`, every term a positive-weighted
/// binary cross-entropy summed over the nodes of its graph.
pub fn classification_loss(
    tape: &Tape,
    logits_a: Var,
    logits_b: &[Var],
    targets: &NodeTargets,
    weights: &LossWeights,
    beta_a: f64,
) -> Result<Var> {
    if !(0.0..=1.0).contains(&beta_a) {
        return Err(AtagError::Validation(format!("beta_A = {beta_a} is outside [0, 1]")));
    }
    let n = targets.abnormality.len();
    if tape.shape(logits_a) != (n, 1) || weights.positive.len() != n || logits_b.len() != n - 1 {
        return Err(AtagError::Shape("classification targets do not match the graph".into()));
    }
    let l_a = tape.weighted_bce_sum(logits_a, &column(&targets.abnormality), &column(&weights.positive));
    let mut total = tape.scale(l_a, beta_a);
    if beta_a < 1.0 {
        for (i, (&logits, y)) in logits_b.iter().zip(&targets.attributes).enumerate() {
            if tape.shape(logits) != (y.len(), 1) {
                return Err(AtagError::Shape(format!("attribute targets of graph {i} do not match")));
            }
            let w = vec![weights.positive[i + 1]; y.len()];
            let l_b = tape.weighted_bce_sum(logits, &column(y), &column(&w));
            total = tape.add(total, tape.scale(l_b, (1.0 - beta_a) * weights.beta[i]));
        }
    }
    Ok(total)
}
