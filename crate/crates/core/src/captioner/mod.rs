//! Attention captioner: conv encoder, relation maps, feature / relation /
//! label attention, maxout LSTM decoder and greedy / sampled decoding.

mod config;
pub mod layers;
mod model;

use thiserror::Error;

use crate::ndgrad::{CheckpointError, GradError};

pub use config::{AttnSet, ModelConfig};
pub use layers::DecoderState;
pub use model::{argmax, init_params, sample_from_log_probs, Captioner, Decoded, Episode, ModelVars, StepWeights};

#[derive(Debug, Error)]
pub enum CaptionerError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("no attention mechanism is enabled")]
    NoAttentionEnabled,
    #[error("label attention needs at least one label")]
    NoLabels,
    #[error("label {0:?} has no words")]
    InvalidLabel(String),
    #[error("image is {}x{}, model expects {}x{}", got.0, got.1, expected.0, expected.1)]
    CanvasMismatch { expected: (u32, u32), got: (u32, u32) },
    #[error("empty target sequence")]
    EmptySequence,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl From<CheckpointError> for CaptionerError {
    fn from(e: CheckpointError) -> Self {
        CaptionerError::Checkpoint(e.to_string())
    }
}
