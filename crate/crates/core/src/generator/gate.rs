//! Gated evolution of graph embeddings during decoding.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::hat::HatOutput;
use super::GraphState;
use crate::autodiff::{Mat, ParamStore, Tape, Var};
use crate::error::{AtagError, Result};
use crate::nn::{init_linear, linear, project, xavier};

/// How gate pre-activations are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GateMode {
    /// Embeddings stay fixed for the whole report.
    Disabled,
    Learned,
    /// Replaces `O^I` and `O^F` with constants; a test hook for the
    /// saturation identities.
    Override { input: f64, forget: f64 },
}

impl GateMode {
    pub fn is_enabled(&self) -> bool {
        !matches!(self, GateMode::Disabled)
    }

    /// Input gate open, forget gate closed: embeddings pass through.
    pub fn identity() -> Self {
        GateMode::Override {
            input: 20.0,
            forget: -20.0,
        }
    }
}

/// Gate activations recorded for one gate application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateActivations {
    pub input: Mat,
    pub forget: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateStep {
    pub abnormality: GateActivations,
    pub attributes: Vec<GateActivations>,
}

#[derive(Debug, Clone, Copy)]
pub struct GateOutput {
    pub z: Var,
    pub z_hat: Var,
    pub input_gate: Var,
    pub forget_gate: Var,
}

pub fn init_gate(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize) {
    init_linear(params, rng, &format!("{prefix}.ffn1"), dim, dim);
    init_linear(params, rng, &format!("{prefix}.ffn2"), dim, dim);
    for name in ["i1", "i2", "f1", "f2"] {
        params.insert(format!("{prefix}.{name}"), xavier(rng, dim, dim));
    }
}

/// One gate update of `z` (n × D) given the query `h` (1 × D) and context
/// rows `c` (n × D).
pub fn gate(tape: &Tape, params: &ParamStore, prefix: &str, h: Var, z: Var, c: Var, mode: GateMode) -> Result<GateOutput> {
    let (n, d) = tape.shape(z);
    if tape.shape(c) != (n, d) {
        return Err(AtagError::Shape(format!("gate context {:?} for embeddings {:?}", tape.shape(c), (n, d))));
    }
    let zc = tape.add(z, c);
    let ffn = linear(tape, params, &format!("{prefix}.ffn2"), tape.gelu(linear(tape, params, &format!("{prefix}.ffn1"), zc)));
    let z_hat = tape.add(ffn, zc);

    let (o_i, o_f) = match mode {
        GateMode::Override { input, forget } => (
            tape.constant(Array2::from_elem((n, d), input)),
            tape.constant(Array2::from_elem((n, d), forget)),
        ),
        _ => {
            let hh = tape.repeat_rows(h, n);
            let tz = tape.tanh(z);
            let pre = |a: &str, b: &str| {
                tape.add(
                    project(tape, params, &format!("{prefix}.{a}"), hh),
                    project(tape, params, &format!("{prefix}.{b}"), tz),
                )
            };
            (pre("i1", "i2"), pre("f1", "f2"))
        }
    };
    let input_gate = tape.sigmoid(o_i);
    let forget_gate = tape.sigmoid(o_f);
    let next = tape.add(tape.mul(input_gate, z), tape.mul(forget_gate, tape.tanh(z_hat)));
    if tape.value(next).iter().any(|v| !v.is_finite()) {
        return Err(AtagError::Numeric("gate update".into()));
    }
    Ok(GateOutput {
        z: next,
        z_hat,
        input_gate,
        forget_gate,
    })
}

pub const PREFIX_A: &str = "gate_a";
pub const PREFIX_B: &str = "gate_b";

/// Gate outputs for the abnormality graph and every attribute graph.
#[derive(Debug, Clone)]
pub struct GraphGateOutput {
    pub abnormality: GateOutput,
    pub attributes: Vec<GateOutput>,
}

impl GraphGateOutput {
    pub fn state(&self) -> GraphState {
        GraphState {
            z_a: self.abnormality.z,
            z_b: self.attributes.iter().map(|g| g.z).collect(),
        }
    }

    pub fn activations(&self, tape: &Tape) -> GateStep {
        let acts = |g: &GateOutput| GateActivations {
            input: tape.value(g.input_gate),
            forget: tape.value(g.forget_gate),
        };
        GateStep {
            abnormality: acts(&self.abnormality),
            attributes: self.attributes.iter().map(acts).collect(),
        }
    }
}

/// Gates the abnormality embedding and every attribute embedding with the
/// query `h`, using attention-weighted rows of each graph as its context.
pub fn gate_graph(
    tape: &Tape,
    params: &ParamStore,
    h: Var,
    state: &GraphState,
    attention: &HatOutput,
    mode: GateMode,
) -> Result<GraphGateOutput> {
    let ctx = |z: Var, zeta: Var| tape.scale_rows(z, tape.transpose(zeta));
    let abnormality = gate(tape, params, PREFIX_A, h, state.z_a, ctx(state.z_a, attention.zeta_a), mode)?;
    let attributes = state
        .z_b
        .iter()
        .zip(&attention.zeta_b)
        .map(|(&zb, &zeta)| gate(tape, params, PREFIX_B, h, zb, ctx(zb, zeta), mode))
        .collect::<Result<_>>()?;
    Ok(GraphGateOutput {
        abnormality,
        attributes,
    })
}
