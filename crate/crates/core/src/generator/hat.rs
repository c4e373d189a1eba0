//! Hierarchical attention over attribute graphs, then over abnormality nodes
//! paired with their attribute contexts.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::GraphState;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{AtagError, Result};
use crate::nn::xavier;

/// Handles of one additive attention block `softmax(tanh(x W1 + y W2) W3)`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights {
    pub w1: Var,
    pub w2: Var,
    pub w3: Var,
}

impl AttentionWeights {
    pub fn bind(tape: &Tape, params: &ParamStore, prefix: &str) -> Self {
        Self {
            w1: params.bind(tape, &format!("{prefix}.w1")),
            w2: params.bind(tape, &format!("{prefix}.w2")),
            w3: params.bind(tape, &format!("{prefix}.w3")),
        }
    }

    pub fn init(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, query: usize, key: usize, hidden: usize) {
        params.insert(format!("{prefix}.w1"), xavier(rng, query, hidden));
        params.insert(format!("{prefix}.w2"), xavier(rng, key, hidden));
        params.insert(format!("{prefix}.w3"), xavier(rng, hidden, 1));
    }
}

/// Weights (1 × rows) of query `x` (1 × q) over the rows of `y`. Entries
/// where `mask` is false get zero weight.
pub fn additive_attention(tape: &Tape, x: Var, y: Var, w: &AttentionWeights, mask: Option<&Array2<bool>>) -> Var {
    let (rows, _) = tape.shape(y);
    let q = tape.repeat_rows(tape.matmul(x, w.w1), rows);
    let k = tape.matmul(y, w.w2);
    let scores = tape.transpose(tape.matmul(tape.tanh(tape.add(q, k)), w.w3));
    match mask {
        Some(m) => tape.masked_softmax_rows(scores, m),
        None => tape.softmax_rows(scores),
    }
}

#[derive(Debug, Clone)]
pub struct HatOutput {
    /// Attributed abnormality context, 1 × 2D.
    pub context: Var,
    /// 1 × (|A| + 1).
    pub zeta_a: Var,
    /// One 1 × (|B_i| + 1) row per attribute graph.
    pub zeta_b: Vec<Var>,
    /// Weights over the stacked rows of every attribute graph, used for the
    /// global abnormality row.
    pub zeta_b_global: Var,
    /// Attribute contexts, (|A| + 1) × D; row 0 pools all attribute graphs.
    pub c_b: Var,
}

pub const PREFIX: &str = "hat";

pub fn init_hat(params: &mut ParamStore, rng: &mut ChaCha8Rng, dim: usize) {
    AttentionWeights::init(params, rng, &format!("{PREFIX}.b"), dim, dim, dim);
    AttentionWeights::init(params, rng, &format!("{PREFIX}.a"), dim, 2 * dim, dim);
}

/// Hierarchical attention driven by the query `h` (1 × D). With
/// `mask_global`, the global abnormality row receives zero weight.
pub fn hat(tape: &Tape, params: &ParamStore, h: Var, state: &GraphState, mask_global: bool) -> Result<HatOutput> {
    if state.z_b.is_empty() {
        return Err(AtagError::Precondition("hierarchical attention over an empty graph".into()));
    }
    let (rows_a, _) = tape.shape(state.z_a);
    if rows_a != state.z_b.len() + 1 {
        return Err(AtagError::Shape(format!(
            "{rows_a} abnormality rows for {} attribute graphs",
            state.z_b.len()
        )));
    }
    let wb = AttentionWeights::bind(tape, params, &format!("{PREFIX}.b"));
    let wa = AttentionWeights::bind(tape, params, &format!("{PREFIX}.a"));

    let mut zeta_b = Vec::with_capacity(state.z_b.len());
    let mut contexts = Vec::with_capacity(state.z_b.len() + 1);
    let stacked = tape.concat_rows(&state.z_b);
    let zeta_b_global = additive_attention(tape, h, stacked, &wb, None);
    contexts.push(tape.matmul(zeta_b_global, stacked));
    for &zb in &state.z_b {
        let z = additive_attention(tape, h, zb, &wb, None);
        contexts.push(tape.matmul(z, zb));
        zeta_b.push(z);
    }
    let c_b = tape.concat_rows(&contexts);
    let joined = tape.concat_cols(&[state.z_a, c_b]);
    let mask = mask_global.then(|| {
        let mut m = Array2::from_elem((1, rows_a), true);
        m[[0, 0]] = false;
        m
    });
    let zeta_a = additive_attention(tape, h, joined, &wa, mask.as_ref());
    Ok(HatOutput {
        context: tape.matmul(zeta_a, joined),
        zeta_a,
        zeta_b,
        zeta_b_global,
        c_b,
    })
}
