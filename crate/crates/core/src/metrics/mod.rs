//! Caption metrics: BLEU-1..4, ROUGE-L, CIDEr and exact-match METEOR.
//! All functions take pre-tokenized captions.

mod bleu;
mod cider;
mod meteor;
mod ngram;
mod report;
mod rouge;

use thiserror::Error;

pub use bleu::{bleu, bleu_with, corpus_bleu, BleuStats, Smoothing};
pub use cider::{cider, cider_single, IdfTable};
pub use meteor::{align, meteor_x, Alignment, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA};
pub use ngram::{ngram_counts, NGramCounts, NGramProfile};
pub use report::{score_corpus, ItemScores, MetricReport};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("at least one candidate is required")]
    NoCandidates,
    #[error("n-gram order {0} is outside 1..=4")]
    InvalidOrder(usize),
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
}
