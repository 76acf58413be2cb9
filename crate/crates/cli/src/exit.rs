//! Mapping from failures to process exit codes: 2 usage or configuration,
//! 3 I/O or corrupt inputs, 4 numeric failure.

use figcap_core::captioner::CaptionerError;
use figcap_core::captiongen::CaptionError;
use figcap_core::figgen::FigError;
use figcap_core::metrics::MetricError;
use figcap_core::ndgrad::CheckpointError;
use figcap_core::trainer::TrainError;
use figcap_core::GradError;
use thiserror::Error;

pub const USAGE: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERIC: u8 = 4;

/// A problem with the flags or a config file rather than with the data.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn fig(e: &FigError) -> u8 {
    match e {
        FigError::Png(_) | FigError::Io(_) => IO,
        _ => USAGE,
    }
}

fn caption(e: &CaptionError) -> u8 {
    match e {
        CaptionError::Io(_) | CaptionError::Json(_) | CaptionError::Parse { .. } => IO,
        CaptionError::Figure(f) => fig(f),
        _ => USAGE,
    }
}

fn model(e: &CaptionerError) -> u8 {
    match e {
        CaptionerError::Checkpoint(_) => IO,
        CaptionerError::Grad(_) => NUMERIC,
        _ => USAGE,
    }
}

fn train(e: &TrainError) -> u8 {
    match e {
        TrainError::NonFiniteLoss { .. } => NUMERIC,
        TrainError::Io(_) => IO,
        TrainError::Model(m) => model(m),
        TrainError::Data(d) => caption(d),
        _ => USAGE,
    }
}

pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<MetricError>() {
            return USAGE;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train(e);
        }
        if let Some(e) = cause.downcast_ref::<CaptionerError>() {
            return model(e);
        }
        if let Some(e) = cause.downcast_ref::<CaptionError>() {
            return caption(e);
        }
        if let Some(e) = cause.downcast_ref::<FigError>() {
            return fig(e);
        }
        if cause.is::<GradError>() {
            return NUMERIC;
        }
        if cause.is::<CheckpointError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return IO;
        }
    }
    IO
}
