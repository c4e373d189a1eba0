//! Two-level LSTM decoder: a sentence LSTM emits one topic state per sentence,
//! a word LSTM spells the sentence out, and the graph embeddings are gated
//! after every sentence.

use rand_chacha::ChaCha8Rng;

use super::gate::{self, init_gate};
use super::hat::{self, init_hat, AttentionWeights, HatOutput};
use super::{
    row_values, Conditioning, ContextSource, DecodeOptions, DecoderConfig, Generated, GenerationTrace, GraphState,
    TokenPicker, TokenTrace,
};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::corpus::{BOS_ID, EOR_ID, EOS_ID};
use crate::error::{AtagError, Result};
use crate::nn::{init_linear, linear, project, uniform, xavier, zeros};

/// One LSTM step with gate order (input, forget, cell, output).
/// `wx` is in × 4D, `wh` is D × 4D, `b` is 1 × 4D.
pub fn lstm_cell(tape: &Tape, x: Var, h: Var, c: Var, wx: Var, wh: Var, b: Var) -> (Var, Var) {
    let d = tape.shape(h).1;
    let pre = tape.add_row(tape.add(tape.matmul(x, wx), tape.matmul(h, wh)), b);
    let i = tape.sigmoid(tape.slice_cols(pre, 0, d));
    let f = tape.sigmoid(tape.slice_cols(pre, d, d));
    let g = tape.tanh(tape.slice_cols(pre, 2 * d, d));
    let o = tape.sigmoid(tape.slice_cols(pre, 3 * d, d));
    let c_next = tape.add(tape.mul(f, c), tape.mul(i, g));
    (tape.mul(o, tape.tanh(c_next)), c_next)
}

struct CellWeights {
    wx: Var,
    wh: Var,
    b: Var,
}

impl CellWeights {
    fn bind(tape: &Tape, params: &ParamStore, prefix: &str) -> Self {
        Self {
            wx: params.bind(tape, &format!("{prefix}.wx")),
            wh: params.bind(tape, &format!("{prefix}.wh")),
            b: params.bind(tape, &format!("{prefix}.b")),
        }
    }

    fn init(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, input: usize, dim: usize) {
        params.insert(format!("{prefix}.wx"), xavier(rng, input, 4 * dim));
        params.insert(format!("{prefix}.wh"), xavier(rng, dim, 4 * dim));
        params.insert(format!("{prefix}.b"), zeros(1, 4 * dim));
    }

    fn step(&self, tape: &Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        lstm_cell(tape, x, h, c, self.wx, self.wh, self.b)
    }
}

#[derive(Debug, Clone)]
pub struct LstmDecoder {
    pub config: DecoderConfig,
}

/// State carried from one sentence to the next.
struct SentenceState {
    graph: GraphState,
    h: Var,
    c: Var,
}

struct SentenceStart {
    h: Var,
    c: Var,
    context: Var,
    attention: Option<HatOutput>,
}

impl LstmDecoder {
    pub fn new(config: DecoderConfig) -> Self {
        Self { config }
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore {
        let d = self.config.dim;
        let v = self.config.vocab_size;
        let mut p = ParamStore::new();
        init_linear(&mut p, rng, "lstm.init", 2 * d, d);
        init_linear(&mut p, rng, "lstm.ctx", 2 * d, d);
        CellWeights::init(&mut p, rng, "lstm.s", d, d);
        CellWeights::init(&mut p, rng, "lstm.w", 4 * d, d);
        init_linear(&mut p, rng, "lstm.out", d, v);
        p.insert("lstm.emb", uniform(rng, v, d, 0.1));
        if self.config.context == ContextSource::Atag {
            init_hat(&mut p, rng, d);
            if self.config.gate.is_enabled() {
                AttentionWeights::init(&mut p, rng, "lstm.watt", d, d, d);
                p.insert("lstm.hproj", xavier(rng, 2 * d, d));
                init_gate(&mut p, rng, gate::PREFIX_A, d);
                init_gate(&mut p, rng, gate::PREFIX_B, d);
            }
        }
        p
    }

    fn embed(&self, tape: &Tape, table: Var, id: usize) -> Var {
        let d = self.config.dim;
        tape.gather(table, (1, d), (id * d..(id + 1) * d).collect())
    }

    fn initial_state(&self, tape: &Tape, params: &ParamStore, cond: &Conditioning) -> Var {
        let seed = match self.config.context {
            ContextSource::Atag => {
                let g = &cond.graph;
                let firsts: Vec<Var> = g.z_b.iter().map(|&z| tape.row(z, 0)).collect();
                let mean_b = tape.mean_rows(tape.concat_rows(&firsts));
                tape.concat_cols(&[tape.row(g.z_a, 0), mean_b])
            }
            ContextSource::Visual => cond.visual,
        };
        tape.tanh(linear(tape, params, "lstm.init", seed))
    }

    fn begin_sentence(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        sent: &CellWeights,
        state: &SentenceState,
    ) -> Result<SentenceStart> {
        let (context, attention) = match self.config.context {
            ContextSource::Atag => {
                let out = hat::hat(tape, params, state.h, &state.graph, self.config.mask_global)?;
                (out.context, Some(out))
            }
            ContextSource::Visual => (cond.visual, None),
        };
        let x = linear(tape, params, "lstm.ctx", context);
        let (h, c) = sent.step(tape, x, state.h, state.c);
        Ok(SentenceStart { h, c, context, attention })
    }

    /// Pools word states with self-attention, combines them with the topic
    /// state and gates the graph embeddings.
    fn end_sentence(
        &self,
        tape: &Tape,
        params: &ParamStore,
        start: &SentenceStart,
        graph: &GraphState,
        words: &[Var],
        trace: Option<&mut GenerationTrace>,
    ) -> Result<GraphState> {
        let mode = self.config.effective_gate();
        let attention = match (&start.attention, mode) {
            (Some(a), m) if m.is_enabled() => a,
            _ => return Ok(graph.clone()),
        };
        if words.is_empty() {
            return Err(AtagError::Precondition("sentence without word states".into()));
        }
        let stacked = tape.concat_rows(words);
        let w = AttentionWeights::bind(tape, params, "lstm.watt");
        let pooled: Vec<Var> = words
            .iter()
            .map(|&h| tape.matmul(hat::additive_attention(tape, h, stacked, &w, None), stacked))
            .collect();
        let c_w = tape.mean_rows(tape.concat_rows(&pooled));
        let query = project(tape, params, "lstm.hproj", tape.concat_cols(&[start.h, c_w]));
        let gated = gate::gate_graph(tape, params, query, graph, attention, mode)?;
        if let Some(t) = trace {
            t.sentence_gates.push(gated.activations(tape));
        }
        Ok(gated.state())
    }

    fn start_state(&self, tape: &Tape, params: &ParamStore, cond: &Conditioning) -> SentenceState {
        let d = self.config.dim;
        SentenceState {
            graph: cond.graph.clone(),
            h: self.initial_state(tape, params, cond),
            c: tape.constant(zeros(1, d)),
        }
    }

    pub fn teacher_forced_logits(
        &self,
        tape: &Tape,
        params: &ParamStore,
        cond: &Conditioning,
        report: &[Vec<usize>],
    ) -> Result<Var> {
        if report.is_empty() {
            return Err(AtagError::Precondition("empty reference report".into()));
        }
        let d = self.config.dim;
        let sent = CellWeights::bind(tape, params, "lstm.s");
        let word = CellWeights::bind(tape, params, "lstm.w");
        let emb = params.bind(tape, "lstm.emb");
        let mut state = self.start_state(tape, params, cond);
        let mut logits = Vec::new();
        for sentence in report {
            if sentence.is_empty() {
                return Err(AtagError::Precondition("empty sentence in reference".into()));
            }
            let start = self.begin_sentence(tape, params, cond, &sent, &state)?;
            let topic = tape.concat_cols(&[start.h, start.context]);
            let (mut h, mut c) = (tape.constant(zeros(1, d)), tape.constant(zeros(1, d)));
            let mut prev = BOS_ID;
            let mut words = Vec::with_capacity(sentence.len());
            for &target in sentence {
                let x = tape.concat_cols(&[topic, self.embed(tape, emb, prev)]);
                (h, c) = word.step(tape, x, h, c);
                logits.push(linear(tape, params, "lstm.out", h));
                words.push(h);
                prev = target;
            }
            let graph = self.end_sentence(tape, params, &start, &state.graph, &words, None)?;
            state = SentenceState {
                graph,
                h: start.h,
                c: start.c,
            };
        }
        Ok(tape.concat_rows(&logits))
    }

    pub fn generate(&self, tape: &Tape, params: &ParamStore, cond: &Conditioning, options: DecodeOptions) -> Result<Generated> {
        let d = self.config.dim;
        let sent = CellWeights::bind(tape, params, "lstm.s");
        let word = CellWeights::bind(tape, params, "lstm.w");
        let emb = params.bind(tape, "lstm.emb");
        let mut picker = TokenPicker::new(options.sampling);
        let mut trace = options.trace.then(GenerationTrace::default);
        let mut state = self.start_state(tape, params, cond);
        let mut tokens = Vec::new();
        for s in 0..self.config.max_sentences {
            let start = self.begin_sentence(tape, params, cond, &sent, &state)?;
            let topic = tape.concat_cols(&[start.h, start.context]);
            let (mut h, mut c) = (tape.constant(zeros(1, d)), tape.constant(zeros(1, d)));
            let mut prev = BOS_ID;
            let mut words = Vec::new();
            let mut finished = false;
            for step in 0..=self.config.max_words {
                let x = tape.concat_cols(&[topic, self.embed(tape, emb, prev)]);
                (h, c) = word.step(tape, x, h, c);
                words.push(h);
                let logits = row_values(tape, linear(tape, params, "lstm.out", h));
                // a sentence that reaches the word limit is closed
                let token = if step == self.config.max_words { EOS_ID } else { picker.pick(&logits) };
                tokens.push(token);
                if let Some(t) = trace.as_mut() {
                    t.tokens.push(TokenTrace {
                        token,
                        sentence: s,
                        zeta_a: start.attention.as_ref().map(|a| row_values(tape, a.zeta_a)).unwrap_or_default(),
                        zeta_b: start
                            .attention
                            .as_ref()
                            .map(|a| a.zeta_b.iter().map(|&z| row_values(tape, z)).collect())
                            .unwrap_or_default(),
                        gates: Vec::new(),
                    });
                }
                prev = token;
                if token == EOS_ID || token == EOR_ID {
                    finished = token == EOR_ID;
                    break;
                }
            }
            let graph = self.end_sentence(tape, params, &start, &state.graph, &words, trace.as_mut())?;
            state = SentenceState {
                graph,
                h: start.h,
                c: start.c,
            };
            if finished {
                break;
            }
        }
        Ok(Generated::from_tokens(tokens, trace))
    }
}

