use super::ngram::ngram_counts;
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Zero precision at any order gives a zero score.
    #[default]
    None,
    /// Add one to numerator and denominator for orders ≥ 2.
    AddOne,
}

/// Sufficient statistics for BLEU; summing them across items gives corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn of(candidate: &[String], references: &[Vec<String>], max_n: usize) -> Result<Self, MetricError> {
        check_order(max_n)?;
        if references.is_empty() {
            return Err(MetricError::NoReferences);
        }
        let mut s = BleuStats {
            cand_len: candidate.len(),
            ref_len: closest_ref_len(candidate.len(), references),
            ..Default::default()
        };
        for n in 1..=max_n {
            let cand = ngram_counts(candidate, n);
            let ref_counts: Vec<_> = references.iter().map(|r| ngram_counts(r, n)).collect();
            for (g, &c) in &cand {
                let max_ref = ref_counts.iter().map(|rc| rc.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
                s.matches[n - 1] += c.min(max_ref);
            }
            s.totals[n - 1] = cand.values().sum();
        }
        Ok(s)
    }

    pub fn add(&mut self, o: &BleuStats) {
        for n in 0..4 {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }

    pub fn score(&self, max_n: usize, smoothing: Smoothing) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..max_n {
            let (mut m, mut t) = (self.matches[n] as f64, self.totals[n] as f64);
            if smoothing == Smoothing::AddOne && n > 0 {
                m += 1.0;
                t += 1.0;
            }
            if m == 0.0 || t == 0.0 {
                return 0.0;
            }
            log_sum += (m / t).ln();
        }
        let bp = (1.0 - self.ref_len as f64 / self.cand_len as f64).exp().min(1.0);
        bp * (log_sum / max_n as f64).exp()
    }
}

fn check_order(max_n: usize) -> Result<(), MetricError> {
    if (1..=4).contains(&max_n) {
        Ok(())
    } else {
        Err(MetricError::InvalidOrder(max_n))
    }
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, references: &[Vec<String>]) -> usize {
    references
        .iter()
        .map(|r| r.len())
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Sentence BLEU without smoothing.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> Result<f64, MetricError> {
    bleu_with(candidate, references, max_n, Smoothing::None)
}

pub fn bleu_with(
    candidate: &[String],
    references: &[Vec<String>],
    max_n: usize,
    smoothing: Smoothing,
) -> Result<f64, MetricError> {
    Ok(BleuStats::of(candidate, references, max_n)?.score(max_n, smoothing))
}

/// Corpus BLEU: statistics pooled over all items before the geometric mean.
pub fn corpus_bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], max_n: usize) -> Result<f64, MetricError> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&BleuStats::of(c, r, max_n)?);
    }
    Ok(total.score(max_n, Smoothing::None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_is_one() {
        assert_eq!(bleu(&t("a b c d"), &[t("a b c d")], 4).unwrap(), 1.0);
    }

    #[test]
    fn clipping_case() {
        let s = bleu(&t("the the the"), &[t("the cat")], 1).unwrap();
        assert!((s - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_errors() {
        assert_eq!(bleu(&[], &[t("a")], 4).unwrap(), 0.0);
        assert!(matches!(bleu(&t("a"), &[], 1), Err(MetricError::NoReferences)));
        assert!(matches!(bleu(&t("a"), &[t("a")], 5), Err(MetricError::InvalidOrder(5))));
    }

    #[test]
    fn brevity_penalty() {
        let s = bleu(&t("a b"), &[t("a b c d")], 1).unwrap();
        assert!((s - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn smoothing_rescues_missing_orders() {
        let c = t("a b x d");
        let r = [t("a b c d")];
        assert_eq!(bleu(&c, &r, 4).unwrap(), 0.0);
        assert!(bleu_with(&c, &r, 4, Smoothing::AddOne).unwrap() > 0.0);
    }
}
