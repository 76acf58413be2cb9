use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::captiongen::{make_record, tokenize, CaptionError, CaptionRecord, DatasetConfig, SplitData};
use crate::figgen::{render, RasterImage};

/// Which reference caption a model is trained and scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionKind {
    High,
    Detailed,
}

impl CaptionKind {
    pub fn text(self, rec: &CaptionRecord) -> &str {
        match self {
            CaptionKind::High => &rec.high_caption,
            CaptionKind::Detailed => &rec.detailed_caption,
        }
    }
}

/// One decoded image with its labels and tokenized reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: u64,
    pub image: RasterImage,
    pub labels: Vec<String>,
    pub reference: Vec<String>,
}

/// Loads `split` of the dataset at `root`; `limit` > 0 keeps the first
/// `limit` records.
pub fn load_examples(root: &Path, split: &str, kind: CaptionKind, limit: usize) -> Result<Vec<Example>, TrainError> {
    let data = SplitData::load(root, split)?;
    let n = if limit > 0 {
        limit.min(data.records.len())
    } else {
        data.records.len()
    };
    data.records[..n]
        .par_iter()
        .map(|rec| {
            let image = RasterImage::read_png(&data.image_path(rec)).map_err(CaptionError::from)?;
            Ok(Example {
                id: rec.id,
                image,
                labels: rec.labels.clone(),
                reference: tokenize(kind.text(rec)),
            })
        })
        .collect()
}

/// The first `n` records of `split` rendered in memory, exactly as
/// [`generate_dataset`](crate::captiongen::generate_dataset) would write them.
pub fn synthesize_examples(cfg: &DatasetConfig, split: &str, kind: CaptionKind, n: usize) -> Result<Vec<Example>, TrainError> {
    (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let (rec, spec) = make_record(cfg, split, id)?;
            let image = render(&spec).map_err(CaptionError::from)?;
            Ok(Example {
                id,
                image,
                labels: rec.labels.clone(),
                reference: tokenize(kind.text(&rec)),
            })
        })
        .collect()
}
