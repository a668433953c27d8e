//! From-scratch differentiable seq2seq: tied embeddings, stacked GRU
//! encoder/decoder, additive attention, greedy decoding, teacher-forced
//! loss, and the closed-loop autoencoding objective trained with SGD.

mod attention;
mod checkpoint;
mod gru;
mod math;
mod seq2seq;
mod train;

use serde::{Deserialize, Serialize};

pub use attention::{attend, Attention};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gru::{gru_cell, GruCache, GruLayer};
pub use math::{argmax, softmax, Mat};
pub use seq2seq::{
    batch_loss, batch_loss_and_grads, decode_distribution, encode, greedy_decode, greedy_decodes,
    reconstruction_loss, teacher_forced_loss, DecoderState, DirectionParams, EncoderOutput,
    LossBreakdown, ModelParams,
};
pub use train::{batch_schedule, generate, make_pairs, train_step, TrainMode, Trainer};

use crate::error::{Error, Result};

/// Model and optimizer knobs. The defaults mirror the full-scale setup
/// (100k vocabulary, 256-dim embeddings and hidden layers, 3-layer stacks,
/// batches of 64 at a fixed learning rate of 0.5); tests and examples dial
/// the sizes down.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_decode_len: usize,
    /// Weight of the reconstruction loss; 0 is the plain seq2seq objective.
    pub ae_weight: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Whether the backward (reconstruction) network uses attention.
    pub backward_attention: bool,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            vocab_size: 100_000,
            embed_dim: 256,
            hidden_dim: 256,
            layers: 3,
            batch_size: 64,
            learning_rate: 0.5,
            max_decode_len: 40,
            ae_weight: 1.0,
            clip_norm: 5.0,
            backward_attention: true,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.layers == 0
            || self.batch_size == 0
            || self.max_decode_len == 0
        {
            return Err(Error::Invalid("all dimensions must be positive".into()));
        }
        if self.ae_weight < 0.0 {
            return Err(Error::Invalid("ae_weight must be nonnegative".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::Invalid("clip_norm must be positive".into()));
        }
        Ok(())
    }
}
