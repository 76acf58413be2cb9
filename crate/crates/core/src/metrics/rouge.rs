use super::MetricError;

pub const ROUGE_BETA: f64 = 1.2;

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure (β = 1.2), maximized over references.
pub fn rouge_l(candidate: &[String], references: &[Vec<String>]) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    Ok(references
        .iter()
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn fixtures() {
        assert_eq!(rouge_l(&t("a b c"), &[t("a b c")]).unwrap(), 1.0);
        assert!((rouge_l(&t("a b c d"), &[t("a c b d")]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(rouge_l(&t("a b"), &[t("c d")]).unwrap(), 0.0);
        assert_eq!(rouge_l(&[], &[t("c d")]).unwrap(), 0.0);
        assert!(rouge_l(&t("a"), &[]).is_err());
    }
}
