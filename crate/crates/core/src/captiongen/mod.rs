//! Reference captions for synthetic figures: template grammar, tokenizer,
//! vocabulary and dataset writer.

mod dataset;
mod grammar;
mod text;

use std::path::PathBuf;

use thiserror::Error;

use crate::figgen::FigError;

pub use dataset::{
    figure_type_for, generate_dataset, image_rel_path, load_config, make_record, read_jsonl, CaptionRecord, DatasetConfig,
    Preset, SplitData, SplitSizes, SplitSummary, CAPTIONS_FILE, CONFIG_FILE, FIGURES_FILE, SPLITS,
};
pub use grammar::{
    count_high_variants, enumerate_labels, relation_sentence, relation_surfaces, render_detailed_caption,
    render_detailed_caption_with, render_high_caption, DetailedCaption, Grammar, SlotFamily, DEFAULT_MAX_PAIRWISE,
};
pub use text::{build_vocab, detokenize, normalize, tokenize, Vocabulary, BOS, EOS, PAD, SPECIALS, UNK};

#[derive(Debug, Error)]
pub enum CaptionError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("fact does not hold for the figure: {0}")]
    InconsistentFacts(String),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error(transparent)]
    Figure(#[from] FigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
