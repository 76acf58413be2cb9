//! Standalone scoring of caption files.
//!
//! Both inputs are JSONL. A candidate line is `{"id": .., "caption": ".."}`;
//! a reference line carries either `"caption"` or a `"captions"` list.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use figcap_core::captiongen::tokenize;
use figcap_core::metrics::{score_corpus, ItemScores, MetricReport};
use serde::{Deserialize, Serialize};

use crate::exit::usage;

#[derive(Debug, Deserialize)]
struct Line {
    id: serde_json::Value,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    captions: Option<Vec<String>>,
}

impl Line {
    fn texts(self) -> Vec<String> {
        let mut out = self.captions.unwrap_or_default();
        out.extend(self.caption);
        out
    }
}

#[derive(Debug, Serialize)]
pub struct Record {
    pub id: serde_json::Value,
    #[serde(flatten)]
    pub scores: ItemScores,
}

#[derive(Debug, Serialize)]
pub struct ScoreReport {
    pub metrics: MetricReport,
    pub records: Vec<Record>,
}

/// Lines keyed by the JSON text of their id, so numeric and string ids
/// never collide.
fn read(path: &Path) -> Result<BTreeMap<String, (serde_json::Value, Vec<String>)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(raw).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        let key = line.id.to_string();
        let id = line.id.clone();
        if out.insert(key, (id, line.texts())).is_some() {
            return Err(usage(format!("{}:{}: duplicate id", path.display(), i + 1)));
        }
    }
    Ok(out)
}

pub fn score_files(cand: &Path, refs: &Path) -> Result<ScoreReport> {
    let cands = read(cand)?;
    let refs = read(refs)?;
    if cands.is_empty() {
        return Err(usage(format!("{} has no candidates", cand.display())));
    }
    if !cands.keys().eq(refs.keys()) {
        let missing: Vec<&String> = cands.keys().filter(|k| !refs.contains_key(*k)).take(3).collect();
        let extra: Vec<&String> = refs.keys().filter(|k| !cands.contains_key(*k)).take(3).collect();
        return Err(usage(format!(
            "candidate and reference ids differ (unreferenced: {missing:?}, uncandidated: {extra:?})"
        )));
    }
    let mut ids = Vec::new();
    let mut c = Vec::new();
    let mut r = Vec::new();
    for (key, (id, texts)) in cands {
        let joined = texts.join(" ");
        let ref_texts = &refs[&key].1;
        if ref_texts.is_empty() {
            return Err(usage(format!("reference {key} has no captions")));
        }
        ids.push(id);
        c.push(tokenize(&joined));
        r.push(ref_texts.iter().map(|t| tokenize(t)).collect::<Vec<_>>());
    }
    let (metrics, items) = score_corpus(&c, &r)?;
    let records = ids.into_iter().zip(items).map(|(id, scores)| Record { id, scores }).collect();
    Ok(ScoreReport { metrics, records })
}
