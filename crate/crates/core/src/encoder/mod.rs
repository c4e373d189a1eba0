//! Graph embeddings from visual features: spatial attention per abnormality
//! and attribute, concept embeddings, graph attention, node classifiers and
//! the weighted classification loss.

mod loss;
pub mod visual;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::{AtagError, Result};
use crate::graph::AtagStructure;
use crate::nn::{uniform, xavier, zeros};

pub use loss::{beta_weights, classification_loss, positive_weight, LossWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatActivation {
    Elu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Model width D; visual features are 2D wide.
    pub dim: usize,
    /// One attribute-GAT weight set per attribute graph instead of a shared one.
    pub per_graph_attribute_gat: bool,
    pub gat_activation: GatActivation,
}

impl EncoderConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            per_graph_attribute_gat: false,
            gat_activation: GatActivation::Elu,
        }
    }
}

/// Parameter handles of one graph attention layer.
#[derive(Debug, Clone, Copy)]
pub struct GatWeights {
    pub w: Var,
    pub a_src: Var,
    pub a_dst: Var,
}

impl GatWeights {
    pub fn bind(tape: &Tape, params: &ParamStore, prefix: &str) -> Self {
        Self {
            w: params.bind(tape, &format!("{prefix}.w")),
            a_src: params.bind(tape, &format!("{prefix}.src")),
            a_dst: params.bind(tape, &format!("{prefix}.dst")),
        }
    }

    pub fn init(params: &mut ParamStore, rng: &mut ChaCha8Rng, prefix: &str, dim: usize) {
        params.insert(format!("{prefix}.w"), xavier(rng, dim, dim));
        params.insert(format!("{prefix}.src"), xavier(rng, dim, 1));
        params.insert(format!("{prefix}.dst"), xavier(rng, dim, 1));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GatOutput {
    pub out: Var,
    /// Row-normalized neighborhood weights, N×N.
    pub attention: Var,
}

fn check_finite(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(AtagError::Numeric(what.to_string()))
    }
}

/// `channels × positions` attention maps: the 1×1 convolution responses of
/// every position, normalized over positions.
pub fn spatial_attention(tape: &Tape, features: Var, conv_w: Var, conv_b: Var) -> Result<Var> {
    check_finite(tape, features, "spatial attention input")?;
    let (_, fdim) = tape.shape(features);
    let (wrows, _) = tape.shape(conv_w);
    if wrows != fdim {
        return Err(AtagError::Shape(format!("conv expects {wrows} input channels, features have {fdim}")));
    }
    let responses = tape.add_row(tape.matmul(features, conv_w), conv_b);
    Ok(tape.softmax_rows(tape.transpose(responses)))
}

/// Attention-weighted features, one row per channel, preceded by a global
/// row equal to the mean of the others.
pub fn attend_features(tape: &Tape, alpha: Var, features: Var) -> Result<Var> {
    let (_, positions) = tape.shape(alpha);
    let (rows, _) = tape.shape(features);
    if positions != rows {
        return Err(AtagError::Shape(format!("{positions} attention positions, {rows} feature rows")));
    }
    let attended = tape.matmul(alpha, features);
    Ok(tape.concat_rows(&[tape.mean_rows(attended), attended]))
}

/// Single-head graph attention. `mask` must contain self-loops.
pub fn gat_layer(tape: &Tape, x: Var, mask: &Array2<bool>, w: &GatWeights, activation: GatActivation) -> Result<GatOutput> {
    let (n, _) = tape.shape(x);
    if mask.dim() != (n, n) {
        return Err(AtagError::Shape(format!("{n} nodes but a {:?} adjacency", mask.dim())));
    }
    if let Some(i) = (0..n).find(|&i| !mask.row(i).iter().any(|&m| m)) {
        return Err(AtagError::Precondition(format!("node {i} has an empty neighborhood")));
    }
    let h = tape.matmul(x, w.w);
    let src = tape.repeat_cols(tape.matmul(h, w.a_src), n);
    let dst = tape.transpose(tape.repeat_cols(tape.matmul(h, w.a_dst), n));
    let scores = tape.leaky_relu(tape.add(src, dst), 0.2);
    let attention = tape.masked_softmax_rows(scores, mask);
    let agg = tape.matmul(attention, h);
    let out = match activation {
        GatActivation::Elu => tape.elu(agg),
        GatActivation::Linear => agg,
    };
    Ok(GatOutput { out, attention })
}

/// Prepends a global row (mean of the other rows) to a concept table slice.
fn with_global_row(tape: &Tape, table: Var) -> Var {
    tape.concat_rows(&[tape.mean_rows(table), table])
}

/// Projects `F ⊕ E` to D columns and runs the graph attention layer.
/// `attended` already carries its global row; `concepts` does not.
pub fn embed_graph(
    tape: &Tape,
    attended: Var,
    concepts: Var,
    projection: Var,
    mask: &Array2<bool>,
    gat: &GatWeights,
    activation: GatActivation,
) -> Result<GatOutput> {
    let (fa_rows, fa_cols) = tape.shape(attended);
    let (e_rows, e_cols) = tape.shape(concepts);
    let (p_rows, _) = tape.shape(projection);
    if fa_rows != e_rows + 1 || fa_cols + e_cols != p_rows {
        return Err(AtagError::Shape(format!(
            "features {fa_rows}x{fa_cols}, concepts {e_rows}x{e_cols}, projection input {p_rows}"
        )));
    }
    let joined = tape.concat_cols(&[attended, with_global_row(tape, concepts)]);
    gat_layer(tape, tape.matmul(joined, projection), mask, gat, activation)
}

/// Abnormality-graph embedding from attended features and the abnormality
/// concept table.
pub fn embed_abnormalities(
    tape: &Tape,
    attended: Var,
    concepts: Var,
    projection: Var,
    mask: &Array2<bool>,
    gat: &GatWeights,
    activation: GatActivation,
) -> Result<GatOutput> {
    embed_graph(tape, attended, concepts, projection, mask, gat, activation)
}

/// Attribute attention and attribute-graph embedding for one abnormality.
/// `alpha_row` (1 × positions) reweights the features fed to the attribute
/// convolution; the returned attention attends the raw features.
#[allow(clippy::too_many_arguments)]
pub fn embed_attributes(
    tape: &Tape,
    features: Var,
    alpha_row: Var,
    conv_w: Var,
    conv_b: Var,
    concepts: Var,
    projection: Var,
    mask: &Array2<bool>,
    gat: &GatWeights,
    activation: GatActivation,
) -> Result<(Var, GatOutput)> {
    let reweighted = tape.scale_rows(features, tape.transpose(alpha_row));
    let alpha_b = spatial_attention(tape, reweighted, conv_w, conv_b)?;
    let attended = attend_features(tape, alpha_b, features)?;
    let z = embed_graph(tape, attended, concepts, projection, mask, gat, activation)?;
    Ok((alpha_b, z))
}

/// Per-node logits `z_i · w_i + b_i` (N×1).
pub fn classify(tape: &Tape, z: Var, w: Var, b: Var) -> Var {
    tape.add(tape.row_sums(tape.mul(z, w)), b)
}

/// Everything the encoder computes for one case.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    pub alpha_a: Var,
    pub alpha_b: Vec<Var>,
    pub z_a: Var,
    pub z_b: Vec<Var>,
    pub gat_attention_a: Var,
    pub gat_attention_b: Vec<Var>,
    pub logits_a: Var,
    pub logits_b: Vec<Var>,
}

/// Graph-specific encoder layout; parameters live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    mask_a: Array2<bool>,
    masks_b: Vec<Array2<bool>>,
    attribute_rows: Vec<Vec<usize>>,
    attribute_table_rows: usize,
}

pub const PREFIX: &str = "enc";

impl Encoder {
    pub fn new(graph: &AtagStructure, config: EncoderConfig) -> Result<Self> {
        if config.dim == 0 {
            return Err(AtagError::Config("model dim must be positive".into()));
        }
        graph.validate()?;
        Ok(Self {
            config,
            mask_a: graph.abnormality_mask(),
            masks_b: (0..graph.num_abnormalities()).map(|i| graph.attribute_mask(i)).collect(),
            attribute_rows: graph.attribute_rows(),
            attribute_table_rows: graph.attribute_vocabulary().len(),
        })
    }

    pub fn num_abnormalities(&self) -> usize {
        self.masks_b.len()
    }

    pub fn attribute_counts(&self) -> Vec<usize> {
        self.attribute_rows.iter().map(Vec::len).collect()
    }

    fn attribute_gat_prefix(&self, i: usize) -> String {
        if self.config.per_graph_attribute_gat {
            format!("{PREFIX}.gat_b{i}")
        } else {
            format!("{PREFIX}.gat_b")
        }
    }

    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore {
        let d = self.config.dim;
        let a = self.num_abnormalities();
        let mut p = ParamStore::new();
        p.insert(format!("{PREFIX}.conv_a.w"), xavier(rng, 2 * d, a));
        p.insert(format!("{PREFIX}.conv_a.b"), zeros(1, a));
        p.insert(format!("{PREFIX}.e_a"), uniform(rng, a, d, 0.1));
        p.insert(format!("{PREFIX}.e_b"), uniform(rng, self.attribute_table_rows, d, 0.1));
        p.insert(format!("{PREFIX}.proj_a"), xavier(rng, 3 * d, d));
        p.insert(format!("{PREFIX}.proj_b"), xavier(rng, 3 * d, d));
        GatWeights::init(&mut p, rng, &format!("{PREFIX}.gat_a"), d);
        if !self.config.per_graph_attribute_gat {
            GatWeights::init(&mut p, rng, &format!("{PREFIX}.gat_b"), d);
        }
        p.insert(format!("{PREFIX}.cls_a.w"), xavier(rng, a + 1, d));
        p.insert(format!("{PREFIX}.cls_a.b"), zeros(a + 1, 1));
        for (i, rows) in self.attribute_rows.iter().enumerate() {
            let b = rows.len();
            p.insert(format!("{PREFIX}.conv_b{i}.w"), xavier(rng, 2 * d, b));
            p.insert(format!("{PREFIX}.conv_b{i}.b"), zeros(1, b));
            if self.config.per_graph_attribute_gat {
                GatWeights::init(&mut p, rng, &self.attribute_gat_prefix(i), d);
            }
            p.insert(format!("{PREFIX}.cls_b{i}.w"), xavier(rng, b + 1, d));
            p.insert(format!("{PREFIX}.cls_b{i}.b"), zeros(b + 1, 1));
        }
        p
    }

    /// Runs the encoder on `(H·W) × 2D` features.
    pub fn forward(&self, tape: &Tape, params: &ParamStore, features: Var) -> Result<EncoderOutput> {
        let d = self.config.dim;
        let (_, fdim) = tape.shape(features);
        if fdim != 2 * d {
            return Err(AtagError::Shape(format!("visual features are {fdim} wide, expected 2D = {}", 2 * d)));
        }
        let bind = |name: &str| params.bind(tape, &format!("{PREFIX}.{name}"));
        let act = self.config.gat_activation;

        let alpha_a = spatial_attention(tape, features, bind("conv_a.w"), bind("conv_a.b"))?;
        let f_a = attend_features(tape, alpha_a, features)?;
        let gat_a = GatWeights::bind(tape, params, &format!("{PREFIX}.gat_a"));
        let za = embed_abnormalities(tape, f_a, bind("e_a"), bind("proj_a"), &self.mask_a, &gat_a, act)?;
        let logits_a = classify(tape, za.out, bind("cls_a.w"), bind("cls_a.b"));

        let e_b = bind("e_b");
        let proj_b = bind("proj_b");
        let mut out = EncoderOutput {
            alpha_a,
            alpha_b: Vec::new(),
            z_a: za.out,
            z_b: Vec::new(),
            gat_attention_a: za.attention,
            gat_attention_b: Vec::new(),
            logits_a,
            logits_b: Vec::new(),
        };
        for (i, rows) in self.attribute_rows.iter().enumerate() {
            let width = tape.shape(e_b).1;
            let idx: Vec<usize> = rows.iter().flat_map(|&r| (0..width).map(move |c| r * width + c)).collect();
            let concepts = tape.gather(e_b, (rows.len(), width), idx);
            let gat = GatWeights::bind(tape, params, &self.attribute_gat_prefix(i));
            let (alpha_b, zb) = embed_attributes(
                tape,
                features,
                tape.row(alpha_a, i),
                bind(&format!("conv_b{i}.w")),
                bind(&format!("conv_b{i}.b")),
                concepts,
                proj_b,
                &self.masks_b[i],
                &gat,
                act,
            )?;
            out.alpha_b.push(alpha_b);
            out.z_b.push(zb.out);
            out.gat_attention_b.push(zb.attention);
            out.logits_b
                .push(classify(tape, zb.out, bind(&format!("cls_b{i}.w")), bind(&format!("cls_b{i}.b"))));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests;
