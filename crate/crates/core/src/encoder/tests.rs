use approx::assert_abs_diff_eq;
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::gradcheck::check_gradients;
use crate::graph::{build_from_tuples, NodeTargets, Thresholds};
use crate::lexicon::ExtractionTuple;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
}

fn three_node_graph() -> AtagStructure {
    let t = |a: &str, attrs: &[&str]| ExtractionTuple::positive(a, attrs);
    let cases = vec![
        vec![t("a", &["x", "y"]), t("b", &["x"])],
        vec![t("a", &["x", "y"]), t("b", &["z"])],
        vec![t("c", &["y"])],
        vec![],
    ];
    build_from_tuples(
        &cases,
        Thresholds {
            abnormality: 1,
            attribute: 1,
            edge: 2,
        },
    )
    .unwrap()
}

#[test]
fn zero_conv_gives_uniform_attention() {
    let tape = Tape::new();
    let f = tape.constant(Array2::from_elem((4, 2), 0.7));
    let alpha = spatial_attention(&tape, f, tape.constant(zeros(2, 3)), tape.constant(zeros(1, 3))).unwrap();
    for v in tape.value(alpha).iter() {
        assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
    }
}

#[test]
fn unit_logit_attention_values() {
    let tape = Tape::new();
    let f = tape.constant(array![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
    let alpha = spatial_attention(&tape, f, tape.constant(array![[1.0], [0.0]]), tape.constant(zeros(1, 1))).unwrap();
    let a = tape.value(alpha);
    let expected = [0.4754, 0.1749, 0.1749, 0.1749];
    for (v, e) in a.iter().zip(expected) {
        assert_abs_diff_eq!(*v, e, epsilon = 1e-4);
    }
}

#[test]
fn spatial_permutation_permutes_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = rand_mat(&mut rng, 5, 4);
    let w = rand_mat(&mut rng, 4, 2);
    let perm = [3, 0, 4, 1, 2];
    let fp = Array2::from_shape_fn((5, 4), |(r, c)| f[[perm[r], c]]);
    let tape = Tape::new();
    let b = tape.constant(zeros(1, 2));
    let a1 = tape.value(spatial_attention(&tape, tape.constant(f), tape.constant(w.clone()), b).unwrap());
    let a2 = tape.value(spatial_attention(&tape, tape.constant(fp), tape.constant(w), b).unwrap());
    for ch in 0..2 {
        for (r, &p) in perm.iter().enumerate() {
            assert_abs_diff_eq!(a2[[ch, r]], a1[[ch, p]], epsilon = 1e-14);
        }
    }
}

#[test]
fn non_finite_features_rejected() {
    let tape = Tape::new();
    let f = tape.constant(array![[f64::NAN, 0.0]]);
    let r = spatial_attention(&tape, f, tape.constant(zeros(2, 1)), tape.constant(zeros(1, 1)));
    assert!(matches!(r, Err(AtagError::Numeric(_))));
}

#[test]
fn attended_features() {
    let tape = Tape::new();
    let f = tape.constant(array![[1.0, 2.0], [3.0, 4.0]]);
    let out = tape.value(attend_features(&tape, tape.constant(array![[0.5, 0.5]]), f).unwrap());
    assert_eq!(out, array![[2.0, 3.0], [2.0, 3.0]]);
    let out = tape.value(attend_features(&tape, tape.constant(array![[0.0, 1.0], [1.0, 0.0]]), f).unwrap());
    assert_eq!(out.row(1), array![3.0, 4.0]);
    assert_eq!(out.row(2), array![1.0, 2.0]);
    assert_eq!(out.row(0), array![2.0, 3.0]);
}

#[test]
fn attended_features_match_loop_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let alpha = rand_mat(&mut rng, 3, 4);
    let f = rand_mat(&mut rng, 4, 6);
    let tape = Tape::new();
    let out = tape.value(attend_features(&tape, tape.constant(alpha.clone()), tape.constant(f.clone())).unwrap());
    for i in 0..3 {
        for c in 0..6 {
            let mut acc = 0.0;
            for p in 0..4 {
                acc += alpha[[i, p]] * f[[p, c]];
            }
            assert_abs_diff_eq!(out[[i + 1, c]], acc, epsilon = 1e-12);
        }
    }
}

fn gat_const(tape: &Tape, w: Array2<f64>, src: Array2<f64>, dst: Array2<f64>) -> GatWeights {
    GatWeights {
        w: tape.constant(w),
        a_src: tape.constant(src),
        a_dst: tape.constant(dst),
    }
}

#[test]
fn single_node_identity_gat() {
    let tape = Tape::new();
    let x = array![[0.3, -1.2]];
    let g = gat_const(&tape, Array2::eye(2), array![[0.4], [0.1]], array![[-0.3], [0.2]]);
    let mask = Array2::from_elem((1, 1), true);
    let out = gat_layer(&tape, tape.constant(x.clone()), &mask, &g, GatActivation::Linear).unwrap();
    assert_eq!(tape.value(out.out), x);
}

#[test]
fn two_node_path_by_hand() {
    let tape = Tape::new();
    let x = array![[1.0, 2.0], [3.0, -1.0]];
    let g = gat_const(&tape, Array2::eye(2), array![[0.5], [-0.25]], array![[0.1], [0.3]]);
    let mask = Array2::from_elem((2, 2), true);
    let out = gat_layer(&tape, tape.constant(x), &mask, &g, GatActivation::Elu).unwrap();
    let z = tape.value(out.out);

    // s_i = 0.5 x_i1 - 0.25 x_i2, d_j = 0.1 x_j1 + 0.3 x_j2
    let (s0, s1) = (0.0, 1.75);
    let (d0, d1) = (0.7, 0.0);
    let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
    let rows = [[lrelu(s0 + d0), lrelu(s0 + d1)], [lrelu(s1 + d0), lrelu(s1 + d1)]];
    for (i, e) in rows.iter().enumerate() {
        let (p0, p1) = (e[0].exp(), e[1].exp());
        let (w0, w1) = (p0 / (p0 + p1), p1 / (p0 + p1));
        let expect = [elu(w0 * 1.0 + w1 * 3.0), elu(w0 * 2.0 + w1 * -1.0)];
        assert_abs_diff_eq!(z[[i, 0]], expect[0], epsilon = 1e-10);
        assert_abs_diff_eq!(z[[i, 1]], expect[1], epsilon = 1e-10);
    }
}

#[test]
fn gat_rejects_wrong_mask() {
    let tape = Tape::new();
    let g = gat_const(&tape, Array2::eye(2), zeros(2, 1), zeros(2, 1));
    let x = tape.constant(zeros(2, 2));
    assert!(gat_layer(&tape, x, &Array2::from_elem((3, 3), true), &g, GatActivation::Elu).is_err());
    let isolated = array![[true, false], [false, false]];
    assert!(matches!(
        gat_layer(&tape, x, &isolated, &g, GatActivation::Elu),
        Err(AtagError::Precondition(_))
    ));
}

#[test]
fn identity_padded_projection_reduces_to_gat() {
    // D = 2, one abnormality plus the global node
    let tape = Tape::new();
    let f_a = tape.constant(array![[0.4, -0.7, 9.0, 9.0], [0.4, -0.7, 9.0, 9.0]]);
    let e_a = tape.constant(array![[5.0, 5.0]]);
    let mut proj = zeros(6, 2);
    proj[[0, 0]] = 1.0;
    proj[[1, 1]] = 1.0;
    let g = gat_const(&tape, Array2::eye(2), array![[1.0], [1.0]], array![[1.0], [1.0]]);
    let mask = Array2::from_elem((2, 2), true);
    let z = embed_abnormalities(&tape, f_a, e_a, tape.constant(proj), &mask, &g, GatActivation::Linear).unwrap();
    let v = tape.value(z.out);
    for r in 0..2 {
        assert_abs_diff_eq!(v[[r, 0]], 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(v[[r, 1]], -0.7, epsilon = 1e-15);
    }
}

fn encoder_fixture(dim: usize) -> (AtagStructure, Encoder, ParamStore, Array2<f64>) {
    let graph = three_node_graph();
    let enc = Encoder::new(&graph, EncoderConfig::new(dim)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let params = enc.init_params(&mut rng);
    let f = rand_mat(&mut rng, 4, 2 * dim);
    (graph, enc, params, f)
}

#[test]
fn embedding_shapes() {
    let t = |a: &str| ExtractionTuple::positive(a, &[]);
    let cases = vec![vec![t("a"), t("b"), t("c"), t("d"), t("e")]];
    let graph = build_from_tuples(
        &cases,
        Thresholds {
            abnormality: 1,
            attribute: 1,
            edge: 1,
        },
    )
    .unwrap();
    let enc = Encoder::new(&graph, EncoderConfig::new(8)).unwrap();
    let params = enc.init_params(&mut ChaCha8Rng::seed_from_u64(0));
    let tape = Tape::new();
    let f = tape.constant(rand_mat(&mut ChaCha8Rng::seed_from_u64(1), 16, 16));
    let out = enc.forward(&tape, &params, f).unwrap();
    assert_eq!(tape.shape(out.z_a), (6, 8));
    assert_eq!(tape.shape(out.z_b[0]), (2, 8));
    assert_eq!(tape.shape(out.alpha_a), (5, 16));
}

#[test]
fn feature_width_must_be_twice_dim() {
    let (_, enc, params, _) = encoder_fixture(4);
    let tape = Tape::new();
    let f = tape.constant(zeros(4, 6));
    assert!(matches!(enc.forward(&tape, &params, f), Err(AtagError::Shape(_))));
}

#[test]
fn uniform_alpha_and_zero_attribute_conv_give_uniform_attribute_attention() {
    let (_, enc, mut params, f) = encoder_fixture(3);
    params.insert("enc.conv_a.w", zeros(6, 3));
    params.insert("enc.conv_b0.w", zeros(6, 2));
    let tape = Tape::new();
    let out = enc.forward(&tape, &params, tape.constant(f)).unwrap();
    for v in tape.value(out.alpha_b[0]).iter() {
        assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
    }
}

#[test]
fn one_hot_alpha_isolates_selected_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let f = rand_mat(&mut rng, 4, 4);
    let mut g = f.clone();
    for c in 0..4 {
        g[[2, c]] = rng.random_range(-1.0..1.0);
    }
    let tape = Tape::new();
    let run = |feat: &Array2<f64>| {
        let gw = gat_const(&tape, Array2::eye(2), zeros(2, 1), zeros(2, 1));
        let (alpha_b, _) = embed_attributes(
            &tape,
            tape.constant(feat.clone()),
            tape.constant(array![[0.0, 1.0, 0.0, 0.0]]),
            tape.constant(rand_mat(&mut ChaCha8Rng::seed_from_u64(8), 4, 2)),
            tape.constant(zeros(1, 2)),
            tape.constant(zeros(2, 2)),
            tape.constant(zeros(6, 2)),
            &Array2::from_elem((3, 3), true),
            &gw,
            GatActivation::Elu,
        )
        .unwrap();
        tape.value(alpha_b)
    };
    assert_eq!(run(&f), run(&g));
}

#[test]
fn zero_classifier_gives_half() {
    let tape = Tape::new();
    let z = tape.constant(rand_mat(&mut ChaCha8Rng::seed_from_u64(2), 3, 4));
    let logits = classify(&tape, z, tape.constant(zeros(3, 4)), tape.constant(zeros(3, 1)));
    for v in tape.value(tape.sigmoid(logits)).iter() {
        assert_eq!(*v, 0.5);
    }
}

#[test]
fn probabilities_inside_open_interval() {
    let (_, enc, params, f) = encoder_fixture(4);
    let tape = Tape::new();
    let out = enc.forward(&tape, &params, tape.constant(f)).unwrap();
    for l in std::iter::once(out.logits_a).chain(out.logits_b.iter().copied()) {
        for p in tape.value(tape.sigmoid(l)).iter() {
            assert!(*p > 0.0 && *p < 1.0);
        }
    }
}

#[test]
fn weight_arithmetic() {
    assert_eq!(positive_weight(10, 2).unwrap(), 4.0);
    assert!(positive_weight(10, 10).is_err());
    assert!(positive_weight(10, 0).is_err());
    let b = beta_weights(&[3.0, 4.0]).unwrap();
    assert_abs_diff_eq!(b[0], 0.6, epsilon = 1e-15);
    assert_abs_diff_eq!(b[1], 0.8, epsilon = 1e-15);
    assert!(beta_weights(&[0.0, 0.0]).is_err());
}

#[test]
fn global_weight_falls_back_when_degenerate() {
    let w = LossWeights::from_counts(4, &[0, 1, 3]).unwrap();
    assert_eq!(w.positive, vec![1.0, 3.0, 1.0 / 3.0]);
}

fn fixture_targets(graph: &AtagStructure) -> NodeTargets {
    graph.targets(&[ExtractionTuple::positive("a", &["y"])]).0
}

#[test]
fn beta_a_one_is_abnormality_term() {
    let (graph, enc, params, f) = encoder_fixture(3);
    let tape = Tape::new();
    let out = enc.forward(&tape, &params, tape.constant(f)).unwrap();
    let weights = LossWeights::from_counts(4, &[1, 2, 2, 1]).unwrap();
    let y = fixture_targets(&graph);
    let full = classification_loss(&tape, out.logits_a, &out.logits_b, &y, &weights, 1.0).unwrap();
    let pos = Array2::from_shape_vec((4, 1), weights.positive.clone()).unwrap();
    let ya = Array2::from_shape_vec((4, 1), y.abnormality.clone()).unwrap();
    let only = tape.weighted_bce_sum(out.logits_a, &ya, &pos);
    assert_eq!(tape.scalar(full), tape.scalar(only));
    assert!(classification_loss(&tape, out.logits_a, &out.logits_b, &y, &weights, 1.5).is_err());
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let (graph, enc, params, f) = encoder_fixture(3);
    let weights = LossWeights::from_counts(4, &[1, 2, 2, 1]).unwrap();
    let y = fixture_targets(&graph);
    let report = check_gradients(&params, &[], 6, |tape, p| {
        let out = enc.forward(tape, p, tape.constant(f.clone())).unwrap();
        classification_loss(tape, out.logits_a, &out.logits_b, &y, &weights, 0.6).unwrap()
    });
    assert!(report.worst_relative_error < 1e-4, "{report:?}");
    assert!(report.entries_checked > 50);
}

#[test]
fn attention_rows_are_normalized() {
    let (_, enc, params, f) = encoder_fixture(4);
    let tape = Tape::new();
    let out = enc.forward(&tape, &params, tape.constant(f)).unwrap();
    let mut all = vec![out.alpha_a, out.gat_attention_a];
    all.extend(out.alpha_b.iter().chain(&out.gat_attention_b));
    for v in all {
        for row in tape.value(v).rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn seeded_fixture_golden_values() {
    let (_, enc, params, f) = encoder_fixture(3);
    let tape = Tape::new();
    let out = enc.forward(&tape, &params, tape.constant(f)).unwrap();
    let za = tape.value(out.z_a);
    let zb = tape.value(out.z_b[0]);
    let probs = tape.value(tape.sigmoid(out.logits_a));
    let golden_za = GOLDEN_ZA;
    let golden_zb = GOLDEN_ZB0;
    let golden_p = GOLDEN_PA;
    for (v, g) in za.iter().zip(golden_za) {
        assert_abs_diff_eq!(*v, g, epsilon = 1e-6);
    }
    for (v, g) in zb.iter().zip(golden_zb) {
        assert_abs_diff_eq!(*v, g, epsilon = 1e-6);
    }
    for (v, g) in probs.iter().zip(golden_p) {
        assert_abs_diff_eq!(*v, g, epsilon = 1e-6);
    }
}

const GOLDEN_ZA: [f64; 12] = [
    0.30749579542401634, 0.7887146601380337, -0.22828261894606725,
    0.299872107337159, 0.8065431880216632, -0.22230542189947822,
    0.299872107337159, 0.8065431880216631, -0.22230542189947822,
    0.3191883569704776, 0.7625680278936899, -0.23740291242159067,
];
const GOLDEN_ZB0: [f64; 9] = [
    -0.01482012586806026, 0.40473451154977813, -0.190856990944149,
    -0.01482012586806026, 0.40473451154977813, -0.190856990944149,
    -0.01482012586806026, 0.40473451154977813, -0.190856990944149,
];
const GOLDEN_PA: [f64; 4] = [0.598547990761174, 0.3870233505000604, 0.44193762055419505, 0.6743850129184695];
