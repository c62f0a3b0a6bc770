//! Encoder-decoder sequence model: a small pre-norm transformer in f64 with
//! hand-written backpropagation, AdamW training with early stopping, beam
//! search, and a binary checkpoint format.

mod beam;
mod checkpoint;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod train;
mod transformer;

pub use beam::{beam_search, greedy_decode, BeamCandidate, NextTokenScorer};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::AdamW;
pub use params::ParamStore;
pub use train::{mean_loss, train, EpochStats, TrainOutcome};
pub use transformer::{Encoded, EncodedScorer, LossAndGrads, Seq2Seq};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_heads: usize,
    /// Layers in the encoder and, separately, in the decoder.
    pub n_layers: usize,
    pub dropout: f64,
    /// Longest input the positional table covers.
    pub max_source_len: usize,
    /// Longest target (EOS included) the positional table covers.
    pub max_target_len: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            d_model: 128,
            d_ff: 512,
            n_heads: 4,
            n_layers: 2,
            dropout: 0.1,
            max_source_len: 256,
            max_target_len: 64,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A small configuration that trains in seconds on a laptop CPU.
    pub fn tiny(vocab_size: usize) -> Self {
        Self { vocab_size, d_model: 32, d_ff: 64, n_heads: 2, n_layers: 1, dropout: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [self.vocab_size, self.d_model, self.d_ff, self.n_heads, self.n_layers];
        if dims.contains(&0) || self.max_source_len == 0 || self.max_target_len == 0 {
            return Err(Error::Usage("model dimensions must all be at least 1".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Usage(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Usage(format!("dropout {} must lie in [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Stop as soon as validation loss falls below this value.
    pub stop_below: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            max_epochs: 30,
            patience: 3,
            seed: 0,
            stop_below: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Usage("batch_size, max_epochs and patience must be at least 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Usage("learning_rate must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}
