use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network sizes and regularization. Source and target embeddings are always
/// one shared matrix; `tie_output_embeddings` additionally reuses it as the
/// output projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Decoder state size and per-direction encoder state size.
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub dropout: f64,
    pub tie_output_embeddings: bool,
    /// Layer normalization on the pre-output hidden layer.
    pub layer_norm: bool,
    /// Multiplier on the Glorot-uniform init bounds.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 32,
            hidden_dim: 64,
            attention_dim: 64,
            dropout: 0.1,
            tie_output_embeddings: true,
            layer_norm: false,
            init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.attention_dim == 0 {
            return Err(Error::Config("model dimensions must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Sentences per update.
    pub batch_size: usize,
    /// Updates between dev evaluations.
    pub checkpoint_interval: usize,
    /// Consecutive non-improving checkpoints before stopping.
    pub patience: usize,
    pub max_updates: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 64,
            checkpoint_interval: 1000,
            patience: 8,
            max_updates: 1_000_000,
            clip_norm: Some(5.0),
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 || self.checkpoint_interval == 0 || self.batch_size == 0 || self.max_updates == 0 {
            return Err(Error::Config(
                "patience, checkpoint_interval, batch_size and max_updates must be at least 1".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam needs lr > 0 and betas in [0, 1)".into()));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Beam search settings. The length limit is
/// `max_len_factor · source_len + max_len_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_len_factor: f64,
    pub max_len_offset: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: 5,
            max_len_factor: 2.0,
            max_len_offset: 10,
        }
    }
}

impl DecodeConfig {
    pub fn max_len(&self, source_len: usize) -> usize {
        (self.max_len_factor * source_len as f64).floor() as usize + self.max_len_offset
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 || !(self.max_len_factor >= 0.0) || self.max_len(1) == 0 {
            return Err(Error::Config("beam must be ≥ 1 and the length limit positive".into()));
        }
        Ok(())
    }
}
