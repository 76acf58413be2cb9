//! Metrics against hand-derived values and independent brute-force oracles.

use std::collections::{HashMap, HashSet};

use figcap_core::metrics::{
    align, bleu, cider, cider_single, corpus_bleu, lcs_len, meteor_x, rouge_l, score_corpus, IdfTable, MetricReport,
};
use proptest::prelude::*;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn hand_fixtures() {
    assert!(close(bleu(&toks("the the the"), &[toks("the cat")], 1).unwrap(), 1.0 / 3.0));
    assert!(close(bleu(&toks("a b c d"), &[toks("a b c d")], 4).unwrap(), 1.0));
    assert_eq!(bleu(&[], &[toks("a b")], 4).unwrap(), 0.0);

    assert!(close(rouge_l(&toks("a b c d"), &[toks("a c b d")]).unwrap(), 0.75));
    assert!(close(rouge_l(&toks("a b c"), &[toks("a b c")]).unwrap(), 1.0));
    assert_eq!(rouge_l(&toks("a b"), &[toks("c d")]).unwrap(), 0.0);

    let refs = vec![vec![toks("a b")], vec![toks("c d")]];
    let (scores, _) = cider(&[toks("a b"), toks("x y")], &refs).unwrap();
    assert!(close(scores[0], 5.0));
    assert_eq!(scores[1], 0.0);

    let swap = meteor_x(&toks("b a"), &[toks("a b")]).unwrap();
    let al = align(&toks("b a"), &toks("a b"));
    assert_eq!((al.matches(), al.chunks()), (2, 2));
    assert!(close(swap, 0.5));
    let m = meteor_x(&toks("a b c d e"), &[toks("a b c d e")]).unwrap();
    assert!(close(m, 1.0 - 0.5 * (1.0f64 / 5.0).powi(3)));
    assert!((m - 0.996).abs() < 1e-12);
    assert_eq!(meteor_x(&toks("a b"), &[toks("c d")]).unwrap(), 0.0);
}

/// Length of the longest common subsequence by trying every subsequence of
/// `a`, longest first.
fn brute_lcs(a: &[u8], b: &[u8]) -> usize {
    let is_subseq = |s: &[u8]| {
        let mut it = b.iter();
        s.iter().all(|c| it.any(|d| d == c))
    };
    let n = a.len();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k <= best {
            continue;
        }
        let s: Vec<u8> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| a[i]).collect();
        if is_subseq(&s) {
            best = k;
        }
    }
    best
}

fn all_words(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &c in alphabet {
                let mut w2: Vec<u8> = w.clone();
                w2.push(c);
                next.push(w2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn lcs_matches_brute_force_on_every_binary_pair_up_to_length_8() {
    let words = all_words(b"ab", 8);
    assert_eq!(words.len(), 511);
    for a in &words {
        for b in &words {
            assert_eq!(lcs_len(a, b), brute_lcs(a, b), "{a:?} {b:?}");
        }
    }
}

proptest! {
    #[test]
    fn lcs_matches_brute_force_on_larger_alphabets(
        a in prop::collection::vec(0u8..5, 0..=8),
        b in prop::collection::vec(0u8..5, 0..=8),
    ) {
        prop_assert_eq!(lcs_len(&a, &b), brute_lcs(&a, &b));
    }
}

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return vec![];
    }
    t.windows(n).map(|w| w.to_vec()).collect()
}

/// Straight-from-the-definition CIDEr over a corpus of reference sets.
fn oracle_cider(cand: &[String], item: usize, corpus: &[Vec<Vec<String>>]) -> f64 {
    let n_docs = corpus.len() as f64;
    let mut total = 0.0;
    for n in 1..=4 {
        let df = |g: &Vec<String>| {
            corpus
                .iter()
                .filter(|refs| refs.iter().any(|r| grams(r, n).contains(g)))
                .count()
                .max(1) as f64
        };
        let vec_of = |t: &[String]| -> HashMap<Vec<String>, f64> {
            let mut tf: HashMap<Vec<String>, f64> = HashMap::new();
            for g in grams(t, n) {
                *tf.entry(g).or_default() += 1.0;
            }
            tf.into_iter()
                .map(|(g, c)| {
                    let w = c * (n_docs / df(&g)).ln();
                    (g, w)
                })
                .collect()
        };
        let norm = |v: &HashMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
        let c = vec_of(cand);
        let refs = &corpus[item];
        let mut sum = 0.0;
        for r in refs {
            let rv = vec_of(r);
            let dot: f64 = c.iter().map(|(g, w)| w * rv.get(g).copied().unwrap_or(0.0)).sum();
            let (nc, nr) = (norm(&c), norm(&rv));
            sum += if nc == 0.0 || nr == 0.0 { 0.0 } else { dot / (nc * nr) };
        }
        total += sum / refs.len() as f64;
    }
    10.0 * total / 4.0
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..7)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cider_matches_tf_idf_oracle(
        corpus in prop::collection::vec(prop::collection::vec(sentence(), 1..3), 1..=5),
        cand in sentence(),
        pick in 0usize..5,
    ) {
        let item = pick % corpus.len();
        let idf = IdfTable::build(&corpus).unwrap();
        let got = cider_single(&cand, &corpus[item], &idf).unwrap();
        let want = oracle_cider(&cand, item, &corpus);
        prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        prop_assert!((0.0..=10.0 + 1e-9).contains(&got));
    }

    #[test]
    fn metrics_are_reference_permutation_invariant_and_bounded(
        cand in sentence(),
        refs in prop::collection::vec(sentence(), 1..4),
    ) {
        let mut rev = refs.clone();
        rev.reverse();
        for f in [
            |c: &[String], r: &[Vec<String>]| bleu(c, r, 4).unwrap(),
            |c: &[String], r: &[Vec<String>]| rouge_l(c, r).unwrap(),
            |c: &[String], r: &[Vec<String>]| meteor_x(c, r).unwrap(),
        ] {
            let (a, b) = (f(&cand, &refs), f(&cand, &rev));
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }
        let corpus = vec![refs.clone(), vec![toks("z y x")]];
        let corpus_rev = vec![rev.clone(), vec![toks("z y x")]];
        let a = cider_single(&cand, &refs, &IdfTable::build(&corpus).unwrap()).unwrap();
        let b = cider_single(&cand, &rev, &IdfTable::build(&corpus_rev).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn maxima_on_identical_unique_sequences() {
    let c = toks("w1 w2 w3 w4 w5");
    let r = [c.clone()];
    assert!(close(bleu(&c, &r, 4).unwrap(), 1.0));
    assert!(close(rouge_l(&c, &r).unwrap(), 1.0));
    // A single chunk still carries the fragmentation term.
    assert!(meteor_x(&c, &r).unwrap() > 0.99);
    let refs = vec![vec![c.clone()], vec![toks("v1 v2 v3 v4 v5")]];
    let idf = IdfTable::build(&refs).unwrap();
    assert!(close(cider_single(&c, &refs[0], &idf).unwrap(), 10.0));
}

#[test]
fn cider_is_per_item_independent_given_idf() {
    let refs = vec![vec![toks("a b c")], vec![toks("c d e")], vec![toks("a e")]];
    let cands = vec![toks("a b"), toks("d e"), toks("a")];
    let (s1, _) = cider(&cands, &refs).unwrap();
    let (mut rc, mut rr) = (cands.clone(), refs.clone());
    rc.reverse();
    rr.reverse();
    let (mut s2, _) = cider(&rc, &rr).unwrap();
    s2.reverse();
    assert_eq!(s1, s2);
}

#[test]
fn corpus_report_has_seven_keys_and_perfect_scores_on_identity() {
    let refs: Vec<Vec<Vec<String>>> = ["a b c d e", "f g h i j", "k l m n o"]
        .iter()
        .map(|s| vec![toks(s)])
        .collect();
    let cands: Vec<Vec<String>> = refs.iter().map(|r| r[0].clone()).collect();
    let (report, items) = score_corpus(&cands, &refs).unwrap();
    assert!(close(report.bleu4, 1.0) && close(report.rouge, 1.0));
    assert!(close(corpus_bleu(&cands, &refs, 4).unwrap(), 1.0));
    assert_eq!(items.len(), 3);
    let json = serde_json::to_value(report).unwrap();
    let keys: HashSet<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, MetricReport::KEYS.into_iter().collect());
}
