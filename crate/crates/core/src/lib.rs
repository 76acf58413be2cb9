//! Figure captioning toolkit: synthetic chart generation, reference caption
//! templates, caption metrics, a small reverse-mode autodiff engine, an
//! attention-based LSTM captioner and its MLE / self-critical trainer.

pub mod captioner;
pub mod captiongen;
pub mod figgen;
pub mod metrics;
pub mod ndgrad;
pub mod seed;
pub mod trainer;

pub use figgen::{FigureSpec, FigureType, RasterImage, RelationFact, RelationKind};
pub use ndgrad::{GradError, Tape, Tensor, Var};
