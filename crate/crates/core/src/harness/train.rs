//! Two-phase training: the encoder learns node classification, then it is
//! frozen and the decoder learns to write reports from its embeddings.

use std::collections::BTreeMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{BackboneKind, RunConfig};
use super::optim::Optimizer;
use crate::autodiff::{Mat, ParamStore, Tape, Var};
use crate::corpus::{ReportCase, Sentence, Vocabulary};
use crate::encoder::{classification_loss, LossWeights};
use crate::encoder::visual::StubBackbone;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{AtagError, Result};
use crate::generator::{Conditioning, Decoder, Dropout, GraphState};
use crate::graph::{AtagStructure, NodeTargets};
use crate::lexicon::{ExtractionTuple, Extractor, Negation};

/// Training labels of one case: lexicon tuples from its annotations when it
/// has any, otherwise from its report text.
pub fn case_tuples(case: &ReportCase, extractor: &Extractor) -> Vec<ExtractionTuple> {
    if case.annotations.is_empty() {
        extractor.report(&case.report())
    } else {
        extractor.case_annotations(case)
    }
}

/// Node targets for every case. Fails when positive labels exist but none of
/// them names a graph abnormality, which means the graph belongs to another
/// corpus.
pub fn corpus_targets(graph: &AtagStructure, tuples: &[Vec<ExtractionTuple>]) -> Result<Vec<NodeTargets>> {
    let mut any_positive = false;
    let mut any_known = false;
    let targets = tuples
        .iter()
        .map(|t| {
            for tuple in t.iter().filter(|x| x.negation == Negation::Positive) {
                any_positive = true;
                any_known |= graph.abnormality_index(&tuple.abnormality).is_some();
            }
            graph.targets(t).0
        })
        .collect();
    if any_positive && !any_known {
        return Err(AtagError::Validation(
            "corpus labels name no abnormality of the graph; was the graph built from another corpus?".into(),
        ));
    }
    Ok(targets)
}

/// Truncates a report to the decoder's sentence and word limits.
pub fn clip_report(report: &[Sentence], max_sentences: usize, max_words: usize) -> Vec<Sentence> {
    report
        .iter()
        .filter(|s| !s.is_empty())
        .take(max_sentences)
        .map(|s| s.iter().take(max_words).cloned().collect())
        .collect()
}

/// Visual features of a case as a `(H·W) × 2D` node.
pub fn case_features(tape: &Tape, params: &ParamStore, config: &RunConfig, case: &ReportCase) -> Result<Var> {
    match config.backbone {
        BackboneKind::Precomputed => {
            let f = case.features.as_ref().ok_or_else(|| {
                AtagError::Precondition(format!(
                    "case `{}` has no feature map; attach precomputed features or set backbone = \"stub\"",
                    case.case_id
                ))
            })?;
            Ok(tape.constant(f.to_mat()))
        }
        BackboneKind::Stub => {
            let image = case.image.as_ref().ok_or_else(|| {
                AtagError::Precondition(format!("case `{}` has no image for the stub backbone", case.case_id))
            })?;
            StubBackbone::new(2 * config.dim).forward(tape, params, image)
        }
    }
}

/// Encoder-side parameters (including the backbone, if any).
pub fn init_encoder_params(encoder: &Encoder, config: &RunConfig, rng: &mut ChaCha8Rng) -> ParamStore {
    let mut params = encoder.init_params(rng);
    if config.backbone == BackboneKind::Stub {
        StubBackbone::new(2 * config.dim).init(&mut params, rng);
    }
    params
}

pub fn build_encoder(graph: &AtagStructure, config: &RunConfig) -> Result<Encoder> {
    let mut ec = EncoderConfig::new(config.dim);
    ec.per_graph_attribute_gat = config.per_graph_attribute_gat;
    Encoder::new(graph, ec)
}

/// Frozen encoder outputs for one case, stored as plain matrices.
#[derive(Debug, Clone)]
pub struct CachedConditioning {
    pub z_a: Mat,
    pub z_b: Vec<Mat>,
    pub visual: Mat,
}

impl CachedConditioning {
    pub fn compute(
        encoder: &Encoder,
        params: &ParamStore,
        config: &RunConfig,
        case: &ReportCase,
    ) -> Result<Self> {
        let tape = Tape::new();
        let features = case_features(&tape, params, config, case)?;
        let out = encoder.forward(&tape, params, features)?;
        Ok(Self {
            z_a: tape.value(out.z_a),
            z_b: out.z_b.iter().map(|&z| tape.value(z)).collect(),
            visual: tape.value(tape.mean_rows(features)),
        })
    }

    pub fn bind(&self, tape: &Tape) -> Conditioning {
        Conditioning {
            graph: GraphState {
                z_a: tape.constant(self.z_a.clone()),
                z_b: self.z_b.iter().map(|z| tape.constant(z.clone())).collect(),
            },
            visual: tape.constant(self.visual.clone()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    /// Mean classification loss per phase-1 epoch.
    pub phase1: Vec<f64>,
    /// Mean generation loss per phase-2 epoch.
    pub phase2: Vec<f64>,
}

/// Everything a training run produces.
#[derive(Debug, Clone)]
pub struct Trained {
    pub vocabulary: Vocabulary,
    pub encoder_params: ParamStore,
    pub decoder_params: ParamStore,
    pub history: TrainingHistory,
}

fn batches(n: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch).map(<[usize]>::to_vec).collect()
}

fn finite_grads(grads: &BTreeMap<String, Mat>) -> Result<()> {
    match grads.iter().find(|(_, g)| g.iter().any(|v| !v.is_finite())) {
        Some((name, _)) => Err(AtagError::Numeric(format!("non-finite gradient for `{name}`"))),
        None => Ok(()),
    }
}

/// Phase 1 for `epochs` epochs; returns the mean loss of each epoch.
pub fn train_encoder(
    encoder: &Encoder,
    params: &mut ParamStore,
    config: &RunConfig,
    cases: &[ReportCase],
    targets: &[NodeTargets],
    epochs: usize,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Ok(Vec::new());
    }
    let weights = LossWeights::from_targets(targets)?;
    let mut opt = Optimizer::new(config.optimizer, config.encoder_lr, config.momentum, config.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(101));
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for batch in batches(cases.len(), config.batch_size, &mut rng) {
            let tape = Tape::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in &batch {
                let features = case_features(&tape, params, config, &cases[i])?;
                let out = encoder.forward(&tape, params, features)?;
                losses.push(classification_loss(&tape, out.logits_a, &out.logits_b, &targets[i], &weights, config.beta_a)?);
            }
            let loss = tape.scale(tape.sum(tape.concat_rows(&losses)), 1.0 / batch.len() as f64);
            total += tape.scalar(loss) * batch.len() as f64;
            let grads = tape.param_grads(&tape.backward(loss));
            finite_grads(&grads)?;
            opt.step(params, &grads);
        }
        let mean = total / cases.len() as f64;
        info!("phase 1 epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

/// Phase 2 for `epochs` epochs over frozen conditioning.
pub fn train_decoder(
    decoder: &Decoder,
    params: &mut ParamStore,
    config: &RunConfig,
    conditioning: &[CachedConditioning],
    reports: &[Vec<Vec<usize>>],
    epochs: usize,
) -> Result<Vec<f64>> {
    let mut opt = Optimizer::new(config.optimizer, config.decoder_lr, config.momentum, config.clip_norm);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(202));
    let rate = decoder.config().dropout;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let dropout = (rate > 0.0).then(|| Dropout::new(rate, config.seed.wrapping_add(303 + epoch as u64)));
        let mut total = 0.0;
        for batch in batches(reports.len(), config.batch_size, &mut rng) {
            let tape = Tape::new();
            let mut losses = Vec::with_capacity(batch.len());
            for &i in &batch {
                let cond = conditioning[i].bind(&tape);
                losses.push(decoder.loss(&tape, params, &cond, &reports[i], dropout.as_ref())?);
            }
            let loss = tape.scale(tape.sum(tape.concat_rows(&losses)), 1.0 / batch.len() as f64);
            total += tape.scalar(loss) * batch.len() as f64;
            let grads = tape.param_grads(&tape.backward(loss));
            finite_grads(&grads)?;
            opt.step(params, &grads);
        }
        let mean = total / reports.len() as f64;
        info!("phase 2 epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok(history)
}

/// Full two-phase run on `cases`.
pub fn train(config: &RunConfig, graph: &AtagStructure, cases: &[ReportCase], extractor: &Extractor) -> Result<Trained> {
    config.validate()?;
    if cases.is_empty() {
        return Err(AtagError::Precondition("empty training corpus".into()));
    }
    let tuples: Vec<_> = cases.iter().map(|c| case_tuples(c, extractor)).collect();
    let targets = corpus_targets(graph, &tuples)?;
    let vocabulary = Vocabulary::build(cases, config.min_token_frequency)?;
    let encoder = build_encoder(graph, config)?;
    let decoder = Decoder::new(config.decoder_config(vocabulary.len()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut encoder_params = init_encoder_params(&encoder, config, &mut rng);
    let mut decoder_params = decoder.init_params(&mut rng);

    let phase1 = train_encoder(&encoder, &mut encoder_params, config, cases, &targets, config.phase1_epochs)?;

    let conditioning = cases
        .iter()
        .map(|c| CachedConditioning::compute(&encoder, &encoder_params, config, c))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<_> = cases
        .iter()
        .map(|c| vocabulary.encode_report(&clip_report(&c.report(), config.max_sentences, config.max_words)))
        .collect();
    let phase2 = train_decoder(&decoder, &mut decoder_params, config, &conditioning, &reports, config.phase2_epochs)?;

    Ok(Trained {
        vocabulary,
        encoder_params,
        decoder_params,
        history: TrainingHistory { phase1, phase2 },
    })
}

