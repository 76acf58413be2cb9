use std::collections::BTreeMap;

/// Count of every n-gram of one order, iterated in a fixed order so that
/// floating-point sums over it are reproducible.
pub type NGramCounts<'a> = BTreeMap<&'a [String], usize>;

pub fn ngram_counts(tokens: &[String], n: usize) -> NGramCounts<'_> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// N-gram multisets of orders `1..=max_n`.
#[derive(Debug, Clone)]
pub struct NGramProfile<'a> {
    pub orders: Vec<NGramCounts<'a>>,
}

impl<'a> NGramProfile<'a> {
    pub fn new(tokens: &'a [String], max_n: usize) -> Self {
        Self {
            orders: (1..=max_n).map(|n| ngram_counts(tokens, n)).collect(),
        }
    }

    pub fn order(&self, n: usize) -> &NGramCounts<'a> {
        &self.orders[n - 1]
    }

    pub fn total(&self, n: usize) -> usize {
        self.order(n).values().sum()
    }
}
