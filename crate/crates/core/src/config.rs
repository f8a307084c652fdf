//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub gru_hidden: usize,
    pub n_blocks: usize,
    pub block_channels: usize,
    /// Output channels of the two strided stem convolutions.
    pub stem_channels: usize,
    pub classifier_channels: usize,
    pub mlp_hidden: usize,
    pub n_answers: usize,
    pub image_size: usize,
    pub eps: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk(miniclevr::language::VOCABULARY.len(), miniclevr::NUM_ANSWERS)
    }
}

impl ModelConfig {
    /// Laptop-scale widths.
    pub fn desk(vocab_size: usize, n_answers: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 32,
            gru_hidden: 128,
            n_blocks: 2,
            block_channels: 32,
            stem_channels: 32,
            classifier_channels: 64,
            mlp_hidden: 128,
            n_answers,
            image_size: 48,
            eps: 1e-5,
            momentum: 0.1,
            seed: 0,
        }
    }

    /// Widths used for the original CLEVR experiments.
    pub fn paper(vocab_size: usize, n_answers: usize) -> Self {
        ModelConfig {
            embed_dim: 200,
            gru_hidden: 4096,
            n_blocks: 3,
            block_channels: 128,
            stem_channels: 128,
            classifier_channels: 512,
            mlp_hidden: 1024,
            ..ModelConfig::desk(vocab_size, n_answers)
        }
    }

    /// Small enough for finite-difference checks of the whole network.
    pub fn tiny(vocab_size: usize, n_answers: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 3,
            gru_hidden: 4,
            n_blocks: 1,
            block_channels: 4,
            stem_channels: 3,
            classifier_channels: 4,
            mlp_hidden: 5,
            n_answers,
            image_size: 8,
            eps: 1e-5,
            momentum: 0.1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("gru_hidden", self.gru_hidden),
            ("n_blocks", self.n_blocks),
            ("block_channels", self.block_channels),
            ("stem_channels", self.stem_channels),
            ("classifier_channels", self.classifier_channels),
            ("mlp_hidden", self.mlp_hidden),
            ("n_answers", self.n_answers),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.image_size < 4 {
            return Err(Error::Config("image_size must be at least 4".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::Config("momentum must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Spatial extent after the two stride-2 stem convolutions.
    pub fn feature_size(&self) -> usize {
        let half = |s: usize| (s - 1) / 2 + 1;
        half(half(self.image_size))
    }
}
