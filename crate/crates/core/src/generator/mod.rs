//! Report decoders conditioned on graph embeddings: hierarchical attention,
//! gated embedding updates, a two-level LSTM and a Transformer with
//! recursive cross-attention inside each layer.

pub mod gate;
pub mod hat;
mod lstm;
mod transformer;

use std::cell::RefCell;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::corpus::{EOR_ID, EOS_ID, PAD_ID};
use crate::error::{AtagError, Result};

pub use gate::{gate, gate_graph, GateActivations, GateMode, GateOutput, GateStep, GraphGateOutput};
pub use hat::{additive_attention, hat, AttentionWeights, HatOutput};
pub use lstm::{lstm_cell, LstmDecoder};
pub use transformer::{multi_head_attention, TransformerDecoder};

/// Current abnormality embedding (|A|+1 × D) and attribute embeddings
/// (|B_i|+1 × D each).
#[derive(Debug, Clone)]
pub struct GraphState {
    pub z_a: Var,
    pub z_b: Vec<Var>,
}

/// Inputs every decoder is conditioned on.
#[derive(Debug, Clone)]
pub struct Conditioning {
    pub graph: GraphState,
    /// Mean visual feature (1 × 2D), the context of the graph-free baseline.
    pub visual: Var,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Lstm,
    Transformer,
}

impl std::str::FromStr for DecoderKind {
    type Err = AtagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(DecoderKind::Lstm),
            "transformer" => Ok(DecoderKind::Transformer),
            other => Err(AtagError::Config(format!("unknown decoder `{other}`"))),
        }
    }
}

/// Where the per-step context comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// Hierarchical attention over the graph embeddings.
    Atag,
    /// Mean visual feature only; no graph, no gates.
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub kind: DecoderKind,
    pub dim: usize,
    pub vocab_size: usize,
    pub heads: usize,
    pub layers: usize,
    pub recursions: usize,
    pub context: ContextSource,
    pub gate: GateMode,
    /// Excludes the global abnormality row from attention.
    pub mask_global: bool,
    pub max_sentences: usize,
    pub max_words: usize,
    pub dropout: f64,
}

impl DecoderConfig {
    pub fn new(kind: DecoderKind, dim: usize, vocab_size: usize) -> Self {
        Self {
            kind,
            dim,
            vocab_size,
            heads: 4,
            layers: 2,
            recursions: 2,
            context: ContextSource::Atag,
            gate: GateMode::Learned,
            mask_global: false,
            max_sentences: 12,
            max_words: 30,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtagError::Config(m.to_string()));
        if self.dim == 0 || self.vocab_size <= EOR_ID {
            return bad("decoder needs a positive width and a vocabulary with the special tokens");
        }
        if self.kind == DecoderKind::Transformer {
            if self.heads == 0 || self.dim % self.heads != 0 {
                return bad("model width must be divisible by the head count");
            }
            if self.layers == 0 || self.recursions == 0 {
                return bad("layer and recursion counts must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Gates are applied only when attending the graph.
    pub fn effective_gate(&self) -> GateMode {
        match self.context {
            ContextSource::Atag => self.gate,
            ContextSource::Visual => GateMode::Disabled,
        }
    }

    /// Longest token sequence a decoder may emit.
    pub fn max_tokens(&self) -> usize {
        self.max_sentences * (self.max_words + 1)
    }
}

/// Inverted dropout driven by its own seeded generator.
#[derive(Debug)]
pub struct Dropout {
    pub rate: f64,
    rng: RefCell<ChaCha8Rng>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Self {
        Self {
            rate,
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn apply(&self, tape: &Tape, x: Var) -> Var {
        if self.rate == 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let (r, c) = tape.shape(x);
        let mut rng = self.rng.borrow_mut();
        let mask = Array2::from_shape_fn((r, c), |_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
        tape.mul(x, tape.constant(mask))
    }
}

pub(crate) fn maybe_dropout(dropout: Option<&Dropout>, tape: &Tape, x: Var) -> Var {
    dropout.map_or(x, |d| d.apply(tape, x))
}

/// Token choice during generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sampling {
    Greedy,
    Temperature { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    pub sampling: Sampling,
    pub trace: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            sampling: Sampling::Greedy,
            trace: false,
        }
    }
}

pub(crate) struct TokenPicker {
    sampling: Sampling,
    rng: Option<ChaCha8Rng>,
}

impl TokenPicker {
    pub(crate) fn new(sampling: Sampling) -> Self {
        let rng = match sampling {
            Sampling::Temperature { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Sampling::Greedy => None,
        };
        Self { sampling, rng }
    }

    /// Picks a token from one row of logits. Greedy ties go to the lower id.
    pub(crate) fn pick(&mut self, logits: &[f64]) -> usize {
        match (self.sampling, self.rng.as_mut()) {
            (Sampling::Temperature { temperature, .. }, Some(rng)) if temperature > 0.0 => {
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|l| ((l - max) / temperature).exp()).collect();
                let mut u = rng.random_range(0.0..w.iter().sum::<f64>());
                for (i, wi) in w.iter().enumerate() {
                    if u < *wi {
                        return i;
                    }
                    u -= wi;
                }
                w.len() - 1
            }
            _ => {
                let mut best = 0;
                for (i, &l) in logits.iter().enumerate() {
                    if l > logits[best] {
                        best = i;
                    }
                }
                best
            }
        }
    }
}

/// One record per emitted token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub token: usize,
    pub sentence: usize,
    pub zeta_a: Vec<f64>,
    pub zeta_b: Vec<Vec<f64>>,
    /// Gate applications performed while producing this token.
    pub gates: Vec<GateStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    pub tokens: Vec<TokenTrace>,
    /// Gate applications performed after each sentence (LSTM decoder).
    pub sentence_gates: Vec<GateStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    /// Word ids of each sentence, terminators removed.
    pub sentences: Vec<Vec<usize>>,
    /// Every emitted id, terminators included.
    pub tokens: Vec<usize>,
    pub trace: Option<GenerationTrace>,
}

impl Generated {
    pub(crate) fn from_tokens(tokens: Vec<usize>, trace: Option<GenerationTrace>) -> Self {
        let mut sentences = Vec::new();
        let mut current = Vec::new();
        for &t in &tokens {
            if t == EOS_ID || t == EOR_ID {
                sentences.push(std::mem::take(&mut current));
            } else {
                current.push(t);
            }
        }
        if !current.is_empty() {
            sentences.push(current);
        }
        sentences.retain(|s| !s.is_empty());
        Self {
            sentences,
            tokens,
            trace,
        }
    }
}

pub(crate) fn row_values(tape: &Tape, v: Var) -> Vec<f64> {
    tape.value(v).iter().copied().collect()
}

/// Mean negative log-likelihood of `targets` under per-row `logits`
/// (T × V); positions whose target is the pad id are skipped.
pub fn generation_loss(tape: &Tape, logits: Var, targets: &[usize]) -> Result<Var> {
    let (rows, vocab) = tape.shape(logits);
    if rows != targets.len() {
        return Err(AtagError::Shape(format!("{rows} logit rows for {} targets", targets.len())));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= vocab) {
        return Err(AtagError::Shape(format!("target id {t} outside a vocabulary of {vocab}")));
    }
    let keep: Vec<usize> = (0..rows).filter(|&r| targets[r] != PAD_ID).collect();
    if keep.is_empty() {
        return Err(AtagError::Precondition("reference has no non-pad tokens".into()));
    }
    let logp = tape.log_softmax_rows(logits);
    let kept = if keep.len() == rows {
        logp
    } else {
        let idx = keep.iter().flat_map(|&r| (0..vocab).map(move |c| r * vocab + c)).collect();
        tape.gather(logp, (keep.len(), vocab), idx)
    };
    let cols: Vec<usize> = keep.iter().map(|&r| targets[r]).collect();
    let picked = tape.pick(kept, &cols);
    Ok(tape.scale(tape.sum(picked), -1.0 / keep.len() as f64))
}

/// Either decoder family behind one interface.
#[derive(Debug, Clone)]
pub enum Decoder {
    Lstm(LstmDecoder),
    Transformer(TransformerDecoder),
}

impl Decoder {
    pub fn new(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            DecoderKind::Lstm => Decoder::Lstm(LstmDecoder::new(config)),
            DecoderKind::Transformer => Decoder::Transformer(TransformerDecoder::new(config)),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        match self {
            Decoder::Lstm(d) => &d.config,
            Decoder::Transformer(d) => &d.config,
        }
    }

    /// Decoder, attention and gate parameters.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore {
        match self {
            Decoder::Lstm(d) => d.init_params(rng),
            Decoder::Transformer(d) => d.init_params(rng),
        }
    }

    /// Logits for every target token of `report` (one id list per sentence,
    /// terminators included) under teacher forcing.
    pub fn teacher_forced_logits(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        report: &[Vec<usize>],
        dropout: Option<&Dropout>,
    ) -> Result<Var> {
        match self {
            Decoder::Lstm(d) => d.teacher_forced_logits(tape, params, cond, report),
            Decoder::Transformer(d) => d.teacher_forced_logits(tape, params, cond, report, dropout),
        }
    }

    pub fn loss(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        report: &[Vec<usize>],
        dropout: Option<&Dropout>,
    ) -> Result<Var> {
        let logits = self.teacher_forced_logits(tape, params, cond, report, dropout)?;
        let targets: Vec<usize> = report.iter().flatten().copied().collect();
        generation_loss(tape, logits, &targets)
    }

    pub fn generate(&self, tape: &Tape, params: &ParamStore, cond: &Conditioning, options: DecodeOptions) -> Result<Generated> {
        match self {
            Decoder::Lstm(d) => d.generate(tape, params, cond, options),
            Decoder::Transformer(d) => d.generate(tape, params, cond, options),
        }
    }
}

#[cfg(test)]
mod tests;
