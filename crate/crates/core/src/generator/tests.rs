use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gate::{init_gate, GateMode, PREFIX_A};
use super::hat::{init_hat, PREFIX};
use super::*;
use crate::autodiff::{Mat, ParamStore, Tape};
use crate::gradcheck::check_gradients;

const D: usize = 4;
const V: usize = 8;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

/// Two abnormalities with two and one attributes (plus global rows).
struct Fixture {
    z_a: Mat,
    z_b: Vec<Mat>,
    visual: Mat,
}

impl Fixture {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            z_a: rand_mat(&mut rng, 3, D),
            z_b: vec![rand_mat(&mut rng, 3, D), rand_mat(&mut rng, 2, D)],
            visual: rand_mat(&mut rng, 1, 2 * D),
        }
    }

    fn cond(&self, tape: &Tape) -> Conditioning {
        Conditioning {
            graph: GraphState {
                z_a: tape.constant(self.z_a.clone()),
                z_b: self.z_b.iter().map(|z| tape.constant(z.clone())).collect(),
            },
            visual: tape.constant(self.visual.clone()),
        }
    }
}

fn config(kind: DecoderKind) -> DecoderConfig {
    let mut c = DecoderConfig::new(kind, D, V);
    c.heads = 2;
    c.layers = 2;
    c.recursions = 2;
    c.max_sentences = 3;
    c.max_words = 4;
    c
}

fn decoder(cfg: DecoderConfig, seed: u64) -> (Decoder, ParamStore) {
    let dec = Decoder::new(cfg).unwrap();
    let params = dec.init_params(&mut ChaCha8Rng::seed_from_u64(seed));
    (dec, params)
}

/// Two sentences, five target tokens.
fn reference() -> Vec<Vec<usize>> {
    vec![vec![5, 6, EOS_ID], vec![7, EOR_ID]]
}

// plain-loop oracle for additive attention: softmax_j(tanh(x W1 + y_j W2) W3)
fn attention_oracle(x: &[f64], y: &Mat, w1: &Mat, w2: &Mat, w3: &Mat, allowed: &[bool]) -> Vec<f64> {
    let hidden = w1.ncols();
    let scores: Vec<f64> = (0..y.nrows())
        .map(|j| {
            (0..hidden)
                .map(|k| {
                    let a: f64 = (0..x.len()).map(|i| x[i] * w1[[i, k]]).sum::<f64>()
                        + (0..y.ncols()).map(|i| y[[j, i]] * w2[[i, k]]).sum::<f64>();
                    a.tanh() * w3[[k, 0]]
                })
                .sum()
        })
        .collect();
    let max = scores.iter().zip(allowed).filter(|(_, &a)| a).map(|(s, _)| *s).fold(f64::MIN, f64::max);
    let e: Vec<f64> = scores.iter().zip(allowed).map(|(s, &a)| if a { (s - max).exp() } else { 0.0 }).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

fn weighted_rows(weights: &[f64], rows: &Mat) -> Vec<f64> {
    (0..rows.ncols()).map(|c| (0..rows.nrows()).map(|r| weights[r] * rows[[r, c]]).sum()).collect()
}

#[test]
fn hat_matches_loop_oracle() {
    let fx = Fixture::new(1);
    let mut params = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    init_hat(&mut params, &mut rng, D);
    let h = rand_mat(&mut rng, 1, D);
    let tape = Tape::new();
    let cond = fx.cond(&tape);
    let out = hat(&tape, &params, tape.constant(h.clone()), &cond.graph, false).unwrap();

    let p = |n: &str| params.get(&format!("{PREFIX}.{n}")).clone();
    let (b1, b2, b3) = (p("b.w1"), p("b.w2"), p("b.w3"));
    let (a1, a2, a3) = (p("a.w1"), p("a.w2"), p("a.w3"));
    let hq: Vec<f64> = h.iter().copied().collect();

    let stacked = ndarray::concatenate(ndarray::Axis(0), &[fx.z_b[0].view(), fx.z_b[1].view()]).unwrap();
    let mut c_rows = vec![weighted_rows(&attention_oracle(&hq, &stacked, &b1, &b2, &b3, &[true; 5]), &stacked)];
    for (i, zb) in fx.z_b.iter().enumerate() {
        let zeta = attention_oracle(&hq, zb, &b1, &b2, &b3, &vec![true; zb.nrows()]);
        let got = tape.value(out.zeta_b[i]);
        for (g, e) in got.iter().zip(&zeta) {
            assert!((g - e).abs() < 1e-12);
        }
        c_rows.push(weighted_rows(&zeta, zb));
    }
    let joined = Array2::from_shape_fn((3, 2 * D), |(r, c)| if c < D { fx.z_a[[r, c]] } else { c_rows[r][c - D] });
    let zeta_a = attention_oracle(&hq, &joined, &a1, &a2, &a3, &[true; 3]);
    let context = weighted_rows(&zeta_a, &joined);
    for (g, e) in tape.value(out.zeta_a).iter().zip(&zeta_a) {
        assert!((g - e).abs() < 1e-12);
    }
    for (g, e) in tape.value(out.context).iter().zip(&context) {
        assert!((g - e).abs() < 1e-12);
    }
    assert_eq!(tape.shape(out.context), (1, 2 * D));
}

#[test]
fn hat_masked_global_row_gets_zero_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut params = ParamStore::new();
    init_hat(&mut params, &mut rng, D);
    let tape = Tape::new();
    // a single abnormality: all weight must land on it
    let state = GraphState {
        z_a: tape.constant(rand_mat(&mut rng, 2, D)),
        z_b: vec![tape.constant(rand_mat(&mut rng, 2, D))],
    };
    let h = tape.constant(rand_mat(&mut rng, 1, D));
    let out = hat(&tape, &params, h, &state, true).unwrap();
    assert_eq!(tape.value(out.zeta_a), array![[0.0, 1.0]]);
}

#[test]
fn hat_with_zero_scorer_is_uniform() {
    let fx = Fixture::new(4);
    let mut params = ParamStore::new();
    init_hat(&mut params, &mut ChaCha8Rng::seed_from_u64(5), D);
    for n in ["b.w3", "a.w3"] {
        params.get_mut(&format!("{PREFIX}.{n}")).unwrap().fill(0.0);
    }
    let tape = Tape::new();
    let cond = fx.cond(&tape);
    let out = hat(&tape, &params, tape.constant(Array2::ones((1, D))), &cond.graph, false).unwrap();
    for v in tape.value(out.zeta_a).iter() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    for v in tape.value(out.zeta_b[1]).iter() {
        assert!((v - 0.5).abs() < 1e-15);
    }
}

#[test]
fn hat_rejects_mismatched_graph() {
    let tape = Tape::new();
    let params = ParamStore::new();
    let state = GraphState {
        z_a: tape.constant(Array2::zeros((2, D))),
        z_b: vec![],
    };
    assert!(hat(&tape, &params, tape.constant(Array2::zeros((1, D))), &state, false).is_err());
}

fn gate_fixture(seed: u64) -> (ParamStore, Mat, Mat, Mat) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamStore::new();
    init_gate(&mut params, &mut rng, PREFIX_A, D);
    (params, rand_mat(&mut rng, 1, D), rand_mat(&mut rng, 3, D), rand_mat(&mut rng, 3, D))
}

#[test]
fn saturated_gates_keep_embeddings() {
    let (params, h, z, c) = gate_fixture(6);
    let tape = Tape::new();
    let mode = GateMode::Override { input: 20.0, forget: -20.0 };
    let out = gate(&tape, &params, PREFIX_A, tape.constant(h), tape.constant(z.clone()), tape.constant(c), mode).unwrap();
    let next = tape.value(out.z);
    for (a, b) in next.iter().zip(z.iter()) {
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn saturated_gates_replace_embeddings() {
    let (params, h, z, c) = gate_fixture(7);
    let tape = Tape::new();
    let mode = GateMode::Override { input: -20.0, forget: 20.0 };
    let out = gate(&tape, &params, PREFIX_A, tape.constant(h), tape.constant(z), tape.constant(c), mode).unwrap();
    let z_hat = tape.value(out.z_hat);
    for (a, b) in tape.value(out.z).iter().zip(z_hat.iter()) {
        assert!((a - b.tanh()).abs() <= 1e-8);
    }
}

#[test]
fn zero_ffn_leaves_residual_only() {
    let (mut params, h, z, c) = gate_fixture(8);
    for n in ["ffn1.w", "ffn1.b", "ffn2.w", "ffn2.b"] {
        params.get_mut(&format!("{PREFIX_A}.{n}")).unwrap().fill(0.0);
    }
    let tape = Tape::new();
    let out = gate(&tape, &params, PREFIX_A, tape.constant(h), tape.constant(z.clone()), tape.constant(c.clone()), GateMode::Learned)
        .unwrap();
    assert_eq!(tape.value(out.z_hat), &z + &c);
}

#[test]
fn learned_gate_matches_formula() {
    let (params, h, z, c) = gate_fixture(9);
    let tape = Tape::new();
    let out = gate(&tape, &params, PREFIX_A, tape.constant(h.clone()), tape.constant(z.clone()), tape.constant(c), GateMode::Learned)
        .unwrap();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let p = |n: &str| params.get(&format!("{PREFIX_A}.{n}")).clone();
    let tz = z.mapv(f64::tanh);
    let (hi, hf) = (h.dot(&p("i1")), h.dot(&p("f1")));
    let (zi, zf) = (tz.dot(&p("i2")), tz.dot(&p("f2")));
    let z_hat = tape.value(out.z_hat);
    let got = tape.value(out.z);
    for r in 0..3 {
        for k in 0..D {
            let e = sig(hi[[0, k]] + zi[[r, k]]) * z[[r, k]] + sig(hf[[0, k]] + zf[[r, k]]) * z_hat[[r, k]].tanh();
            assert!((got[[r, k]] - e).abs() < 1e-12);
        }
    }
}

#[test]
fn lstm_cell_matches_hand_computation() {
    let tape = Tape::new();
    // D = 1, input width 1
    let wx = array![[0.5, -0.3, 0.8, 0.1]];
    let wh = array![[0.2, 0.4, -0.6, 0.7]];
    let b = array![[0.1, 0.0, -0.1, 0.2]];
    let (x, h0, c0) = (0.9, -0.4, 0.3);
    let (h, c) = lstm_cell(
        &tape,
        tape.constant(array![[x]]),
        tape.constant(array![[h0]]),
        tape.constant(array![[c0]]),
        tape.constant(wx.clone()),
        tape.constant(wh.clone()),
        tape.constant(b.clone()),
    );
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let pre = |k: usize| x * wx[[0, k]] + h0 * wh[[0, k]] + b[[0, k]];
    let c1 = sig(pre(1)) * c0 + sig(pre(0)) * pre(2).tanh();
    let h1 = sig(pre(3)) * c1.tanh();
    assert!((tape.scalar(c) - c1).abs() < 1e-15);
    assert!((tape.scalar(h) - h1).abs() < 1e-15);
}

#[test]
fn single_head_attention_matches_sdpa() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut params = ParamStore::new();
    for n in ["q", "k", "v", "o"] {
        params.insert(format!("m.{n}"), rand_mat(&mut rng, D, D));
    }
    let q_in = rand_mat(&mut rng, 2, D);
    let mem = rand_mat(&mut rng, 3, D);
    let tape = Tape::new();
    let out = multi_head_attention(&tape, &params, "m", tape.constant(q_in.clone()), tape.constant(mem.clone()), 1, None);
    let q = q_in.dot(params.get("m.q"));
    let k = mem.dot(params.get("m.k"));
    let v = mem.dot(params.get("m.v"));
    let mut scores = q.dot(&k.t()) / (D as f64).sqrt();
    for mut row in scores.rows_mut() {
        let m = row.fold(f64::MIN, |a, &b| a.max(b));
        row.mapv_inplace(|s| (s - m).exp());
        let t = row.sum();
        row.mapv_inplace(|s| s / t);
    }
    let expected = scores.dot(&v).dot(params.get("m.o"));
    for (a, b) in tape.value(out).iter().zip(expected.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn uniform_logits_give_log_vocab_loss() {
    let tape = Tape::new();
    let logits = tape.constant(Array2::zeros((4, V)));
    let loss = generation_loss(&tape, logits, &[5, 6, PAD_ID, 2]).unwrap();
    assert!((tape.scalar(loss) - (V as f64).ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_logits_give_zero_loss() {
    let tape = Tape::new();
    let targets = [5, 6, 2];
    let mut m = Array2::zeros((3, V));
    for (r, &t) in targets.iter().enumerate() {
        m[[r, t]] = 60.0;
    }
    let loss = generation_loss(&tape, tape.constant(m), &targets).unwrap();
    assert!(tape.scalar(loss) < 1e-20);
}

#[test]
fn loss_rejects_bad_targets() {
    let tape = Tape::new();
    let logits = tape.constant(Array2::zeros((2, V)));
    assert!(generation_loss(&tape, logits, &[1]).is_err());
    assert!(generation_loss(&tape, logits, &[1, V]).is_err());
    assert!(generation_loss(&tape, logits, &[PAD_ID, PAD_ID]).is_err());
}

#[test]
fn teacher_forcing_yields_one_row_per_target() {
    let fx = Fixture::new(11);
    for kind in [DecoderKind::Lstm, DecoderKind::Transformer] {
        let (dec, params) = decoder(config(kind), 12);
        let tape = Tape::new();
        let logits = dec.teacher_forced_logits(&tape, &params, &fx.cond(&tape), &reference(), None).unwrap();
        assert_eq!(tape.shape(logits), (5, V));
        let loss = dec.loss(&tape, &params, &fx.cond(&tape), &reference(), None).unwrap();
        assert!(tape.scalar(loss).is_finite());
    }
}

#[test]
fn transformer_is_causal() {
    let fx = Fixture::new(13);
    let (dec, params) = decoder(config(DecoderKind::Transformer), 14);
    let run = |report: &[Vec<usize>]| {
        let tape = Tape::new();
        let l = dec.teacher_forced_logits(&tape, &params, &fx.cond(&tape), report, None).unwrap();
        tape.value(l)
    };
    let a = run(&[vec![5, 6, EOS_ID], vec![7, EOR_ID]]);
    let b = run(&[vec![5, 6, EOS_ID], vec![6, 5, 7, EOR_ID]]);
    // rows 0..=3 only see inputs BOS, 5, 6, EOS
    for r in 0..4 {
        assert_eq!(a.row(r), b.row(r));
    }
    assert_ne!(a.row(4), b.row(4));
}

#[test]
fn transformer_gates_layers_times_recursions_per_token() {
    let fx = Fixture::new(15);
    for (layers, recursions) in [(1, 1), (2, 3), (3, 2)] {
        let mut cfg = config(DecoderKind::Transformer);
        cfg.layers = layers;
        cfg.recursions = recursions;
        let (dec, params) = decoder(cfg, 16);
        let tape = Tape::new();
        let g = dec
            .generate(&tape, &params, &fx.cond(&tape), DecodeOptions { sampling: Sampling::Greedy, trace: true })
            .unwrap();
        let trace = g.trace.unwrap();
        assert!(!trace.tokens.is_empty());
        for t in &trace.tokens {
            assert_eq!(t.gates.len(), layers * recursions);
            assert_eq!(t.gates[0].attributes.len(), 2);
        }
    }
}

#[test]
fn lstm_gates_once_per_sentence() {
    let fx = Fixture::new(17);
    let (dec, params) = decoder(config(DecoderKind::Lstm), 18);
    let tape = Tape::new();
    let g = dec
        .generate(&tape, &params, &fx.cond(&tape), DecodeOptions { sampling: Sampling::Greedy, trace: true })
        .unwrap();
    let trace = g.trace.unwrap();
    let sentences = trace.tokens.last().unwrap().sentence + 1;
    assert_eq!(trace.sentence_gates.len(), sentences);
}

#[test]
fn identity_gates_generate_the_same_tokens_as_no_gates() {
    let fx = Fixture::new(19);
    for kind in [DecoderKind::Lstm, DecoderKind::Transformer] {
        let mut with = config(kind);
        with.gate = GateMode::identity();
        with.max_sentences = 4;
        with.max_words = 6;
        let mut without = with.clone();
        without.gate = GateMode::Disabled;
        let (gated, params) = decoder(with, 20);
        let plain = Decoder::new(without).unwrap();
        let run = |d: &Decoder| {
            let tape = Tape::new();
            d.generate(&tape, &params, &fx.cond(&tape), DecodeOptions::default()).unwrap().tokens
        };
        let a = run(&gated);
        assert!(!a.is_empty());
        assert_eq!(a, run(&plain), "{kind:?}");
    }
}

#[test]
fn zero_sentence_limit_generates_nothing() {
    let fx = Fixture::new(21);
    for kind in [DecoderKind::Lstm, DecoderKind::Transformer] {
        let mut cfg = config(kind);
        cfg.max_sentences = 0;
        let (dec, params) = decoder(cfg, 22);
        let tape = Tape::new();
        let g = dec.generate(&tape, &params, &fx.cond(&tape), DecodeOptions::default()).unwrap();
        assert!(g.tokens.is_empty() && g.sentences.is_empty());
    }
}

#[test]
fn generation_respects_limits_and_is_deterministic() {
    let fx = Fixture::new(23);
    for kind in [DecoderKind::Lstm, DecoderKind::Transformer] {
        let (dec, params) = decoder(config(kind), 24);
        let sampling = Sampling::Temperature { temperature: 1.0, seed: 5 };
        let run = || {
            let tape = Tape::new();
            dec.generate(&tape, &params, &fx.cond(&tape), DecodeOptions { sampling, trace: false }).unwrap()
        };
        let g = run();
        assert_eq!(g, run());
        assert!(g.sentences.len() <= 3);
        assert!(g.sentences.iter().all(|s| s.len() <= 4));
        assert!(g.tokens.len() <= dec.config().max_tokens());
    }
}

#[test]
fn visual_context_needs_no_graph_parameters() {
    let fx = Fixture::new(25);
    for kind in [DecoderKind::Lstm, DecoderKind::Transformer] {
        let mut cfg = config(kind);
        cfg.context = ContextSource::Visual;
        let (dec, params) = decoder(cfg, 26);
        assert!(params.names().all(|n| !n.starts_with("hat") && !n.starts_with("gate")));
        let tape = Tape::new();
        let g = dec
            .generate(&tape, &params, &fx.cond(&tape), DecodeOptions { sampling: Sampling::Greedy, trace: true })
            .unwrap();
        assert!(g.trace.unwrap().tokens.iter().all(|t| t.gates.is_empty() && t.zeta_a.is_empty()));
    }
}

#[test]
fn config_validation() {
    let mut c = config(DecoderKind::Transformer);
    c.heads = 3;
    assert!(c.validate().is_err());
    let mut c = config(DecoderKind::Lstm);
    c.vocab_size = 3;
    assert!(c.validate().is_err());
    assert_eq!("lstm".parse::<DecoderKind>().unwrap(), DecoderKind::Lstm);
    assert!("rnn".parse::<DecoderKind>().is_err());
}

fn gradient_check(kind: DecoderKind) {
    let fx = Fixture::new(27);
    let mut cfg = config(kind);
    cfg.layers = 1;
    let (dec, params) = decoder(cfg, 28);
    let report = check_gradients(&params, &[], 4, |tape, p| {
        dec.loss(tape, p, &fx.cond(tape), &reference(), None).unwrap()
    });
    assert!(report.worst_relative_error < 1e-4, "{report:?}");
    assert!(report.entries_checked > 60);
}

#[test]
fn lstm_gradients_match_finite_differences() {
    gradient_check(DecoderKind::Lstm);
}

#[test]
fn transformer_gradients_match_finite_differences() {
    gradient_check(DecoderKind::Transformer);
}
