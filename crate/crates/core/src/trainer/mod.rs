//! Teacher-forced MLE, self-critical policy gradient with a CIDEr reward,
//! the hybrid λ-weighted objective, and the training / evaluation loops.

mod data;
mod losses;
mod train;

use thiserror::Error;

use crate::captioner::CaptionerError;
use crate::captiongen::CaptionError;
use crate::metrics::MetricError;

pub use data::{load_examples, synthesize_examples, CaptionKind, Example};
pub use losses::{lambda_schedule, loss_hybrid, loss_mle, loss_scst, LambdaSchedule, Reward, RewardMetric, ScheduleKind};
pub use train::{
    apply_gradients, clip_global_norm, evaluate, sample_gradients, EpisodeOutcome, Objective, SampleGrads, StepLog, TrainConfig,
    Trainer, RL_LR, RL_RAMP_STEPS,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty target sequence")]
    EmptySequence,
    #[error("rewards were computed with different metrics")]
    MetricMismatch,
    #[error("lambda {0} is outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("non-finite loss or gradient at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error(transparent)]
    Model(#[from] CaptionerError),
    #[error(transparent)]
    Data(#[from] CaptionError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
