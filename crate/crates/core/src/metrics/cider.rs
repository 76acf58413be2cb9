use std::collections::{BTreeMap, HashMap, HashSet};

use super::ngram::ngram_counts;
use super::MetricError;

const MAX_N: usize = 4;

/// Document frequencies over a reference corpus. A document is the
/// reference set of one item; each n-gram counts once per document.
#[derive(Debug, Clone)]
pub struct IdfTable {
    df: HashMap<Vec<String>, usize>,
    num_docs: usize,
}

impl IdfTable {
    pub fn build(references: &[Vec<Vec<String>>]) -> Result<Self, MetricError> {
        if references.is_empty() {
            return Err(MetricError::NoReferences);
        }
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for doc in references {
            let mut seen: HashSet<&[String]> = HashSet::new();
            for r in doc {
                for n in 1..=MAX_N {
                    seen.extend(r.windows(n));
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_insert(0) += 1;
            }
        }
        Ok(Self {
            df,
            num_docs: references.len(),
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn df(&self, gram: &[String]) -> usize {
        self.df.get(gram).copied().unwrap_or(0)
    }

    /// `ln(|corpus| / df)`; n-grams absent from the corpus use df = 1.
    pub fn idf(&self, gram: &[String]) -> f64 {
        (self.num_docs as f64 / self.df(gram).max(1) as f64).ln()
    }
}

fn tfidf_vector<'a>(tokens: &'a [String], n: usize, idf: &IdfTable) -> BTreeMap<&'a [String], f64> {
    let counts = ngram_counts(tokens, n);
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| (g, c as f64 / total as f64 * idf.idf(g)))
        .collect()
}

fn cosine(a: &BTreeMap<&[String], f64>, b: &BTreeMap<&[String], f64>) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// CIDEr of one candidate against its references under a fixed idf table.
pub fn cider_single(candidate: &[String], references: &[Vec<String>], idf: &IdfTable) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let mut score = 0.0;
    for n in 1..=MAX_N {
        let c = tfidf_vector(candidate, n, idf);
        let mean: f64 = references.iter().map(|r| cosine(&c, &tfidf_vector(r, n, idf))).sum::<f64>() / references.len() as f64;
        score += mean;
    }
    Ok(10.0 * score / MAX_N as f64)
}

/// Per-candidate CIDEr with idf from `references`, plus the corpus mean.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<(Vec<f64>, f64), MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let idf = IdfTable::build(references)?;
    let scores = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| cider_single(c, r, &idf))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok((scores, mean))
}
