//! Run configuration: a flat TOML file of `key = value` lines.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AtagError, Result};
use crate::generator::{ContextSource, DecoderConfig, DecoderKind, GateMode};
use crate::graph::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Gradient descent with momentum.
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSetting {
    Disabled,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Feature maps stored with each case.
    Precomputed,
    /// Small convolutional stack over the stored grayscale image.
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training corpus (JSON lines). Empty means a synthetic corpus.
    pub corpus: Option<PathBuf>,
    /// Held-out corpus for evaluation; the training corpus when absent.
    pub eval_corpus: Option<PathBuf>,
    /// Graph file. Built from the training corpus annotations when absent.
    pub graph: Option<PathBuf>,
    /// Synthetic generator settings used when no corpus is given.
    pub synthetic_spec: Option<PathBuf>,
    pub synthetic_cases: usize,
    pub synthetic_seed: u64,
    pub abnormality_threshold: usize,
    pub attribute_threshold: usize,
    pub edge_threshold: usize,

    pub decoder: DecoderKind,
    pub context: ContextSource,
    pub gate: GateSetting,
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub recursions: usize,
    pub mask_global: bool,
    pub per_graph_attribute_gat: bool,
    pub backbone: BackboneKind,
    pub beta_a: f64,

    pub optimizer: OptimizerKind,
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Disables dropout so reruns are bit-identical.
    pub deterministic: bool,
    pub dropout: f64,
    pub min_token_frequency: usize,
    pub max_sentences: usize,
    pub max_words: usize,

    pub alpha_b: f64,
    pub top_k: usize,
    /// Drops repeated and one-word sentences from generated reports.
    pub postprocess: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            eval_corpus: None,
            graph: None,
            synthetic_spec: None,
            synthetic_cases: 40,
            synthetic_seed: 7,
            abnormality_threshold: 3,
            attribute_threshold: 2,
            edge_threshold: 2,
            decoder: DecoderKind::Transformer,
            context: ContextSource::Atag,
            gate: GateSetting::Learned,
            dim: 64,
            heads: 4,
            layers: 2,
            recursions: 2,
            mask_global: false,
            per_graph_attribute_gat: false,
            backbone: BackboneKind::Precomputed,
            beta_a: 0.5,
            optimizer: OptimizerKind::Sgd,
            encoder_lr: 0.01,
            decoder_lr: 0.05,
            momentum: 0.9,
            clip_norm: 5.0,
            phase1_epochs: 50,
            phase2_epochs: 200,
            batch_size: 4,
            seed: 1,
            deterministic: true,
            dropout: 0.1,
            min_token_frequency: 1,
            max_sentences: 12,
            max_words: 30,
            alpha_b: 0.5,
            top_k: 25,
            postprocess: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| AtagError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| AtagError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AtagError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AtagError::Config(m.to_string()));
        if self.dim == 0 || self.heads == 0 || self.layers == 0 || self.recursions == 0 {
            return bad("dim, heads, layers and recursions must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.beta_a) {
            return bad("beta_a must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha_b) || self.top_k == 0 {
            return bad("alpha_b must lie in [0, 1] and top_k must be positive");
        }
        if self.encoder_lr < 0.0 || self.decoder_lr < 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning rates must be non-negative and momentum in [0, 1)");
        }
        if self.min_token_frequency == 0 {
            return bad("min_token_frequency must be at least 1");
        }
        if self.max_sentences == 0 || self.max_words == 0 {
            return bad("report length limits must be positive");
        }
        self.decoder_config(5).validate()
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            abnormality: self.abnormality_threshold,
            attribute: self.attribute_threshold,
            edge: self.edge_threshold,
        }
    }

    pub fn decoder_config(&self, vocab_size: usize) -> DecoderConfig {
        let mut c = DecoderConfig::new(self.decoder, self.dim, vocab_size);
        c.heads = self.heads;
        c.layers = self.layers;
        c.recursions = self.recursions;
        c.context = self.context;
        c.gate = match self.gate {
            GateSetting::Disabled => GateMode::Disabled,
            GateSetting::Learned => GateMode::Learned,
        };
        c.mask_global = self.mask_global;
        c.max_sentences = self.max_sentences;
        c.max_words = self.max_words;
        c.dropout = if self.deterministic { 0.0 } else { self.dropout };
        c
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("decoder = \"lstm\"\ndim = 16\nseed = 9\n").unwrap();
        assert_eq!(c.decoder, DecoderKind::Lstm);
        assert_eq!((c.dim, c.seed, c.layers), (16, 9, 2));
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_toml("dimension = 3\n").is_err());
        assert!(RunConfig::from_toml("dim = 0\n").is_err());
        assert!(RunConfig::from_toml("dim = 10\nheads = 4\n").is_err());
        assert!(RunConfig::from_toml("alpha_b = 2.0\n").is_err());
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn deterministic_mode_disables_dropout() {
        let mut c = RunConfig::default();
        assert_eq!(c.decoder_config(10).dropout, 0.0);
        c.deterministic = false;
        assert_eq!(c.decoder_config(10).dropout, 0.1);
    }
}
