//! Slot grammar for reference captions.
//!
//! A high-level caption is `opening + count + enumeration`, each slot drawn
//! from a per-figure-type variant list; a detailed caption appends one
//! sentence per selected relation fact.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CaptionError;
use crate::figgen::{FigureSpec, FigureType, RelationFact, RelationKind};
use crate::seed::mix;

/// Default cap on pairwise relation sentences per detailed caption.
pub const DEFAULT_MAX_PAIRWISE: usize = 4;

const OPENINGS: [&str; 4] = [
    "This is a {T}.",
    "This figure is a {T}.",
    "It is a {T}.",
    "The figure is a {T}.",
];
const GENERAL_COUNTS: [&str; 3] = ["It contains {N} categories.", "There are {N} labels.", "It has {N} labels."];
const ENUMERATIONS: [&str; 3] = ["Their names are {L}.", "The labels are {L}.", "They are {L}."];

/// Variant lists for one figure type. Placeholders: `{T}` figure type
/// phrase, `{N}` label count, `{L}` label enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotFamily {
    pub openings: Vec<String>,
    pub counts: Vec<String>,
    pub enumerations: Vec<String>,
}

impl SlotFamily {
    pub fn variant_count(&self) -> usize {
        self.openings.len() * self.counts.len() * self.enumerations.len()
    }

    /// Realization number `k` in mixed radix (opening, count, enumeration).
    fn realize(&self, k: usize, ty: FigureType, labels: &[String]) -> String {
        let e = k % self.enumerations.len();
        let c = (k / self.enumerations.len()) % self.counts.len();
        let o = k / (self.enumerations.len() * self.counts.len());
        let n = labels.len().to_string();
        let list = enumerate_labels(labels);
        [&self.openings[o], &self.counts[c], &self.enumerations[e]]
            .iter()
            .map(|s| s.replace("{T}", ty.phrase()).replace("{N}", &n).replace("{L}", &list))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// The full high-level grammar: one [`SlotFamily`] per figure type.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub families: Vec<(FigureType, SlotFamily)>,
}

impl Grammar {
    pub fn shipped() -> Self {
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let families = FigureType::ALL
            .iter()
            .map(|&ty| {
                let mut counts = strings(&GENERAL_COUNTS);
                match ty {
                    FigureType::VBar | FigureType::HBar => counts.push("There are {N} different bars.".into()),
                    FigureType::Line | FigureType::DotLine => counts.push("There are {N} lines.".into()),
                    FigureType::Pie => {}
                }
                let fam = SlotFamily {
                    openings: strings(&OPENINGS),
                    counts,
                    enumerations: strings(&ENUMERATIONS),
                };
                (ty, fam)
            })
            .collect();
        Self { families }
    }

    pub fn family(&self, ty: FigureType) -> &SlotFamily {
        &self
            .families
            .iter()
            .find(|(t, _)| *t == ty)
            .expect("every figure type has a family")
            .1
    }

    /// Number of distinct high-level realizations across all families.
    pub fn count_variants(&self) -> usize {
        self.families.iter().map(|(_, f)| f.variant_count()).sum()
    }

    pub fn render_high(&self, spec: &FigureSpec, seed: u64) -> String {
        let fam = self.family(spec.figure_type);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(0..fam.variant_count());
        fam.realize(k, spec.figure_type, &spec.labels())
    }
}

pub fn count_high_variants() -> usize {
    Grammar::shipped().count_variants()
}

/// "A", "A and B", "A, B and C".
pub fn enumerate_labels(labels: &[String]) -> String {
    match labels {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

/// Surface forms for each relation kind; `{A}` is the subject, `{B}` the object.
pub fn relation_surfaces(kind: RelationKind) -> [&'static str; 2] {
    use RelationKind::*;
    match kind {
        Maximum => ["{A} is the maximum.", "{A} has the largest value."],
        Minimum => ["{A} is the minimum.", "{A} has the smallest value."],
        Median => ["{A} is the median.", "{A} has the median value."],
        GreaterThan => ["{A} is greater than {B}.", "{A} is larger than {B}."],
        LessThan => ["{A} is less than {B}.", "{A} is smaller than {B}."],
        HighestValue => ["{A} has the highest value.", "{A} reaches the highest point."],
        LowestValue => ["{A} has the lowest value.", "{A} reaches the lowest point."],
        MaxAuc => [
            "{A} has the maximum area under the curve.",
            "{A} has the largest area under the curve.",
        ],
        MinAuc => [
            "{A} has the minimum area under the curve.",
            "{A} has the smallest area under the curve.",
        ],
        Smoothest => ["{A} is the smoothest.", "{A} is the smoothest line."],
        Roughest => ["{A} is the roughest.", "{A} is the roughest line."],
        Intersects => ["{A} intersects {B}.", "{A} crosses {B}."],
    }
}

pub fn relation_sentence(fact: &RelationFact, variant: usize) -> String {
    let t = relation_surfaces(fact.kind)[variant % 2];
    let s = t.replace("{A}", &fact.subject);
    match &fact.object {
        Some(o) => s.replace("{B}", o),
        None => s,
    }
}

pub fn render_high_caption(spec: &FigureSpec, seed: u64) -> String {
    Grammar::shipped().render_high(spec, seed)
}

/// A detailed caption together with the facts it verbalizes, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailedCaption {
    pub text: String,
    pub facts: Vec<RelationFact>,
}

pub fn render_detailed_caption(spec: &FigureSpec, facts: &[RelationFact], seed: u64) -> Result<String, CaptionError> {
    render_detailed_caption_with(spec, facts, seed, DEFAULT_MAX_PAIRWISE).map(|d| d.text)
}

/// High-level caption for `seed`, then every superlative fact, then up to
/// `max_pairwise` seeded pairwise facts, each kept in input order.
pub fn render_detailed_caption_with(
    spec: &FigureSpec,
    facts: &[RelationFact],
    seed: u64,
    max_pairwise: usize,
) -> Result<DetailedCaption, CaptionError> {
    if let Some(bad) = facts.iter().find(|f| !f.holds(spec)) {
        return Err(CaptionError::InconsistentFacts(bad.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    let pairwise: Vec<usize> = (0..facts.len()).filter(|&i| facts[i].kind.is_binary()).collect();
    let mut keep: Vec<usize> = if pairwise.len() > max_pairwise {
        index::sample(&mut rng, pairwise.len(), max_pairwise)
            .into_iter()
            .map(|k| pairwise[k])
            .collect()
    } else {
        pairwise
    };
    keep.sort_unstable();
    let chosen: Vec<RelationFact> = facts
        .iter()
        .enumerate()
        .filter(|(i, f)| !f.kind.is_binary() || keep.binary_search(i).is_ok())
        .map(|(_, f)| f.clone())
        .collect();

    let mut text = render_high_caption(spec, seed);
    for f in &chosen {
        text.push(' ');
        text.push_str(&relation_sentence(f, rng.gen_range(0..2)));
    }
    Ok(DetailedCaption { text, facts: chosen })
}
