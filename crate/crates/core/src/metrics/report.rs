use serde::{Deserialize, Serialize};

use super::{cider, corpus_bleu, meteor_x, rouge_l, MetricError};

/// The seven evaluation columns, serialized in this order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "CIDEr")]
    pub cider: f64,
    #[serde(rename = "BLEU1")]
    pub bleu1: f64,
    #[serde(rename = "BLEU2")]
    pub bleu2: f64,
    #[serde(rename = "BLEU3")]
    pub bleu3: f64,
    #[serde(rename = "BLEU4")]
    pub bleu4: f64,
    #[serde(rename = "METEOR")]
    pub meteor: f64,
    #[serde(rename = "ROUGE")]
    pub rouge: f64,
}

impl MetricReport {
    pub const KEYS: [&'static str; 7] = ["CIDEr", "BLEU1", "BLEU2", "BLEU3", "BLEU4", "METEOR", "ROUGE"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.cider,
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor,
            self.rouge,
        ]
    }
}

/// Scores of one item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    #[serde(rename = "CIDEr")]
    pub cider: f64,
    #[serde(rename = "BLEU4")]
    pub bleu4: f64,
    #[serde(rename = "METEOR")]
    pub meteor: f64,
    #[serde(rename = "ROUGE")]
    pub rouge: f64,
}

/// Corpus report: CIDEr (idf from these references), corpus BLEU-1..4,
/// and METEOR-x / ROUGE-L averaged over items.
pub fn score_corpus(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
) -> Result<(MetricReport, Vec<ItemScores>), MetricError> {
    if candidates.is_empty() {
        return Err(MetricError::NoCandidates);
    }
    let (cider_items, cider_mean) = cider(candidates, references)?;
    let mut items = Vec::with_capacity(candidates.len());
    for ((c, r), ci) in candidates.iter().zip(references).zip(cider_items) {
        items.push(ItemScores {
            cider: ci,
            bleu4: super::bleu(c, r, 4)?,
            meteor: meteor_x(c, r)?,
            rouge: rouge_l(c, r)?,
        });
    }
    let n = items.len() as f64;
    let report = MetricReport {
        cider: cider_mean,
        bleu1: corpus_bleu(candidates, references, 1)?,
        bleu2: corpus_bleu(candidates, references, 2)?,
        bleu3: corpus_bleu(candidates, references, 3)?,
        bleu4: corpus_bleu(candidates, references, 4)?,
        meteor: items.iter().map(|s| s.meteor).sum::<f64>() / n,
        rouge: items.iter().map(|s| s.rouge).sum::<f64>() / n,
    };
    Ok((report, items))
}
