use super::MetricError;

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Exact-match alignment between candidate and reference positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(candidate index, reference index)` pairs sorted by candidate index.
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }

    /// Maximal runs adjacent in both sequences.
    pub fn chunks(&self) -> usize {
        if self.pairs.is_empty() {
            return 0;
        }
        1 + self
            .pairs
            .windows(2)
            .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
            .count()
    }
}

/// Greedy alignment: repeatedly fix the longest common run of still
/// unaligned positions (earliest candidate position, then earliest
/// reference position, on ties). Every exact match that remains possible
/// is eventually taken, so the match count is maximal; chunks are
/// minimized heuristically.
pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    let (n, m) = (candidate.len(), reference.len());
    let mut used_c = vec![false; n];
    let mut used_r = vec![false; m];
    let mut pairs = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None;
        for i in 0..n {
            for j in 0..m {
                let mut len = 0;
                while i + len < n
                    && j + len < m
                    && !used_c[i + len]
                    && !used_r[j + len]
                    && candidate[i + len] == reference[j + len]
                {
                    len += 1;
                }
                if len > 0 && best.is_none_or(|(_, _, l)| len > l) {
                    best = Some((i, j, len));
                }
            }
        }
        let Some((i, j, len)) = best else { break };
        for k in 0..len {
            used_c[i + k] = true;
            used_r[j + k] = true;
            pairs.push((i + k, j + k));
        }
    }
    pairs.sort_unstable();
    Alignment { pairs }
}

fn score_alignment(a: &Alignment, cand_len: usize, ref_len: usize) -> f64 {
    let m = a.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand_len as f64;
    let r = m as f64 / ref_len as f64;
    let f_mean = p * r / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * r);
    let penalty = METEOR_GAMMA * (a.chunks() as f64 / m as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Exact-match METEOR, maximized over references.
pub fn meteor_x(candidate: &[String], references: &[Vec<String>]) -> Result<f64, MetricError> {
    if references.is_empty() {
        return Err(MetricError::NoReferences);
    }
    Ok(references
        .iter()
        .map(|r| score_alignment(&align(candidate, r), candidate.len(), r.len()))
        .fold(0.0, f64::max))
}
