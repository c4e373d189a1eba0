//! Transformer decoder whose layers attend the graph several times per token,
//! gating the graph embeddings after every pass.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::gate::{self, init_gate, GateStep};
use super::hat::{self, init_hat};
use super::{
    maybe_dropout, row_values, Conditioning, ContextSource, DecodeOptions, DecoderConfig, Dropout, Generated,
    GenerationTrace, GraphState, TokenPicker, TokenTrace,
};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::corpus::{BOS_ID, EOR_ID, EOS_ID};
use crate::error::{AtagError, Result};
use crate::nn::{init_linear, linear, project, uniform, xavier};

/// Scaled dot-product attention with `heads` heads. `query` is n × D,
/// `memory` is m × K; the projections `{prefix}.q` (D × D), `.k`, `.v`
/// (K × D) and `.o` (D × D) are bias-free. `mask[i][j]` false hides key j
/// from query i.
pub fn multi_head_attention(
    tape: &Tape,
    params: &ParamStore,
    prefix: &str,
    query: Var,
    memory: Var,
    heads: usize,
    mask: Option<&Array2<bool>>,
) -> Var {
    let q = project(tape, params, &format!("{prefix}.q"), query);
    let k = project(tape, params, &format!("{prefix}.k"), memory);
    let v = project(tape, params, &format!("{prefix}.v"), memory);
    let d = tape.shape(q).1;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let outs: Vec<Var> = (0..heads)
        .map(|h| {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
            let weights = match mask {
                Some(m) => tape.masked_softmax_rows(scores, m),
                None => tape.softmax_rows(scores),
            };
            tape.matmul(weights, vh)
        })
        .collect();
    project(tape, params, &format!("{prefix}.o"), tape.concat_cols(&outs))
}

fn init_attention(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize, memory: usize) {
    params.insert(format!("{prefix}.q"), xavier(rng, dim, dim));
    params.insert(format!("{prefix}.k"), xavier(rng, memory, dim));
    params.insert(format!("{prefix}.v"), xavier(rng, memory, dim));
    params.insert(format!("{prefix}.o"), xavier(rng, dim, dim));
}

#[derive(Debug, Clone)]
pub struct TransformerDecoder {
    pub config: DecoderConfig,
}

/// Output of one decoding step.
struct Step {
    logits: Var,
    graph: GraphState,
    zeta_a: Option<Var>,
    zeta_b: Vec<Var>,
    gates: Vec<GateStep>,
}

impl TransformerDecoder {
    pub fn new(config: DecoderConfig) -> Self {
        Self { config }
    }

    fn positions(&self) -> usize {
        self.config.max_tokens() + 1
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore {
        let d = self.config.dim;
        let mut p = ParamStore::new();
        p.insert("tf.emb", uniform(rng, self.config.vocab_size, d, 0.1));
        p.insert("tf.pos", uniform(rng, self.positions(), d, 0.1));
        for l in 0..self.config.layers {
            init_attention(&mut p, rng, &format!("tf.l{l}.self"), d, d);
            init_attention(&mut p, rng, &format!("tf.l{l}.cross"), d, 2 * d);
            init_linear(&mut p, rng, &format!("tf.l{l}.ffn1"), d, 2 * d);
            init_linear(&mut p, rng, &format!("tf.l{l}.ffn2"), 2 * d, d);
        }
        init_linear(&mut p, rng, "tf.out", d, self.config.vocab_size);
        if self.config.context == ContextSource::Atag {
            init_hat(&mut p, rng, d);
            if self.config.gate.is_enabled() {
                init_gate(&mut p, rng, gate::PREFIX_A, d);
                init_gate(&mut p, rng, gate::PREFIX_B, d);
            }
        }
        p
    }

    /// Runs every layer for the token at position `t`. `caches[l]` holds the
    /// inputs of layer `l` for positions before `t` and is extended here.
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        graph: &GraphState,
        caches: &mut [Vec<Var>],
        token: usize,
        t: usize,
        dropout: Option<&Dropout>,
        record: bool,
    ) -> Result<Step> {
        let d = self.config.dim;
        if t >= self.positions() {
            return Err(AtagError::Precondition(format!(
                "sequence longer than {} tokens; raise max_sentences or max_words",
                self.positions()
            )));
        }
        let emb = params.bind(tape, "tf.emb");
        let pos = params.bind(tape, "tf.pos");
        let mut x = tape.add(
            tape.gather(emb, (1, d), (token * d..(token + 1) * d).collect()),
            tape.gather(pos, (1, d), (t * d..(t + 1) * d).collect()),
        );
        let mode = self.config.effective_gate();
        let mut graph = graph.clone();
        let mut zeta_a = None;
        let mut zeta_b = Vec::new();
        let mut gates = Vec::new();
        for (l, cache) in caches.iter_mut().enumerate() {
            cache.push(x);
            let memory = tape.concat_rows(cache);
            let attended = multi_head_attention(tape, params, &format!("tf.l{l}.self"), x, memory, self.config.heads, None);
            let mut h = tape.layer_norm_rows(tape.add(x, maybe_dropout(dropout, tape, attended)));
            for _ in 0..self.config.recursions {
                let attention = match self.config.context {
                    ContextSource::Atag => Some(hat::hat(tape, params, h, &graph, self.config.mask_global)?),
                    ContextSource::Visual => None,
                };
                let context = attention.as_ref().map_or(cond.visual, |a| a.context);
                let crossed =
                    multi_head_attention(tape, params, &format!("tf.l{l}.cross"), h, context, self.config.heads, None);
                h = tape.layer_norm_rows(tape.add(h, maybe_dropout(dropout, tape, crossed)));
                let ffn = linear(
                    tape,
                    params,
                    &format!("tf.l{l}.ffn2"),
                    tape.gelu(linear(tape, params, &format!("tf.l{l}.ffn1"), h)),
                );
                h = tape.layer_norm_rows(tape.add(h, maybe_dropout(dropout, tape, ffn)));
                if let Some(a) = attention {
                    if mode.is_enabled() {
                        let gated = gate::gate_graph(tape, params, h, &graph, &a, mode)?;
                        if record {
                            gates.push(gated.activations(tape));
                        }
                        graph = gated.state();
                    }
                    zeta_a = Some(a.zeta_a);
                    zeta_b = a.zeta_b;
                }
            }
            x = h;
        }
        Ok(Step {
            logits: linear(tape, params, "tf.out", x),
            graph,
            zeta_a,
            zeta_b,
            gates,
        })
    }

    pub fn teacher_forced_logits(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        report: &[Vec<usize>],
        dropout: Option<&Dropout>,
    ) -> Result<Var> {
        let targets: Vec<usize> = report.iter().flatten().copied().collect();
        if targets.is_empty() {
            return Err(AtagError::Precondition("empty reference report".into()));
        }
        let mut caches = vec![Vec::new(); self.config.layers];
        let mut graph = cond.graph.clone();
        let mut logits = Vec::with_capacity(targets.len());
        let mut input = BOS_ID;
        for (t, &target) in targets.iter().enumerate() {
            let step = self.step(tape, params, cond, &graph, &mut caches, input, t, dropout, false)?;
            logits.push(step.logits);
            graph = step.graph;
            input = target;
        }
        Ok(tape.concat_rows(&logits))
    }

    pub fn generate(&self, tape: &Tape, params: &ParamStore, cond: &Conditioning, options: DecodeOptions) -> Result<Generated> {
        let mut picker = TokenPicker::new(options.sampling);
        let mut trace = options.trace.then(GenerationTrace::default);
        let mut caches = vec![Vec::new(); self.config.layers];
        let mut graph = cond.graph.clone();
        let mut tokens = Vec::new();
        let (mut sentence, mut words) = (0, 0);
        let mut input = BOS_ID;
        if self.config.max_sentences == 0 {
            return Ok(Generated::from_tokens(tokens, trace));
        }
        for t in 0..self.config.max_tokens() {
            let step = self.step(tape, params, cond, &graph, &mut caches, input, t, None, options.trace)?;
            let mut token = picker.pick(&row_values(tape, step.logits));
            // close sentences at the word limit and the report at the sentence limit
            if words == self.config.max_words && token != EOR_ID {
                token = EOS_ID;
            }
            if token == EOS_ID && sentence + 1 == self.config.max_sentences {
                token = EOR_ID;
            }
            tokens.push(token);
            if let Some(tr) = trace.as_mut() {
                tr.tokens.push(TokenTrace {
                    token,
                    sentence,
                    zeta_a: step.zeta_a.map(|z| row_values(tape, z)).unwrap_or_default(),
                    zeta_b: step.zeta_b.iter().map(|&z| row_values(tape, z)).collect(),
                    gates: step.gates,
                });
            }
            graph = step.graph;
            input = token;
            match token {
                EOR_ID => break,
                EOS_ID => {
                    sentence += 1;
                    words = 0;
                }
                _ => words += 1,
            }
        }
        Ok(Generated::from_tokens(tokens, trace))
    }
}
