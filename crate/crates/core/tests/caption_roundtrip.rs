//! Generated captions parsed back with a small independent reader of the
//! template language.

use std::collections::HashSet;

use figcap_core::captiongen::{
    detokenize, generate_dataset, make_record, normalize, render_detailed_caption, render_detailed_caption_with,
    render_high_caption, tokenize, CaptionRecord, DatasetConfig, Preset,
};
use figcap_core::figgen::{sample_figure_spec, Canvas, FigureSpec, FigureType, Series};
use figcap_core::{RelationFact, RelationKind};
use proptest::prelude::*;

/// Parsed high-level slots.
#[derive(Debug, PartialEq)]
struct High {
    figure: String,
    count: usize,
    labels: Vec<String>,
}

fn sentences(text: &str) -> Vec<String> {
    text.split_inclusive(". ")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_high(s: &[String]) -> Option<High> {
    let opening = s[0].strip_suffix('.')?;
    let figure = ["This is a ", "This figure is a ", "It is a ", "The figure is a "]
        .iter()
        .find_map(|p| opening.strip_prefix(p))?
        .to_string();
    let count = s[1].strip_suffix('.')?;
    let n = [
        ("It contains ", " categories"),
        ("There are ", " labels"),
        ("It has ", " labels"),
        ("There are ", " different bars"),
        ("There are ", " lines"),
    ]
    .iter()
    .find_map(|(p, q)| count.strip_prefix(p)?.strip_suffix(q)?.parse().ok())?;
    let list = s[2].strip_suffix('.')?;
    let list = ["Their names are ", "The labels are ", "They are "]
        .iter()
        .find_map(|p| list.strip_prefix(p))?;
    let labels = match list.rsplit_once(" and ") {
        Some((init, last)) => init.split(", ").chain([last]).map(str::to_string).collect(),
        None => vec![list.to_string()],
    };
    Some(High {
        figure,
        count: n,
        labels,
    })
}

fn parse_relation(s: &str) -> Option<RelationFact> {
    use RelationKind::*;
    let body = s.strip_suffix('.')?;
    let unary = [
        (" is the maximum", Maximum),
        (" has the largest value", Maximum),
        (" is the minimum", Minimum),
        (" has the smallest value", Minimum),
        (" is the median", Median),
        (" has the median value", Median),
        (" has the highest value", HighestValue),
        (" reaches the highest point", HighestValue),
        (" has the lowest value", LowestValue),
        (" reaches the lowest point", LowestValue),
        (" has the maximum area under the curve", MaxAuc),
        (" has the largest area under the curve", MaxAuc),
        (" has the minimum area under the curve", MinAuc),
        (" has the smallest area under the curve", MinAuc),
        (" is the smoothest line", Smoothest),
        (" is the smoothest", Smoothest),
        (" is the roughest line", Roughest),
        (" is the roughest", Roughest),
    ];
    for (suffix, kind) in unary {
        if let Some(a) = body.strip_suffix(suffix) {
            return Some(RelationFact::unary(kind, a));
        }
    }
    let binary = [
        (" is greater than ", GreaterThan),
        (" is larger than ", GreaterThan),
        (" is less than ", LessThan),
        (" is smaller than ", LessThan),
        (" intersects ", Intersects),
        (" crosses ", Intersects),
    ];
    binary
        .iter()
        .find_map(|(infix, kind)| body.split_once(infix).map(|(a, b)| RelationFact::binary(*kind, a, b)))
}

fn check_record(rec: &CaptionRecord, spec: &FigureSpec) -> Result<(), TestCaseError> {
    let all = sentences(&rec.detailed_caption);
    let high = parse_high(&all).ok_or_else(|| TestCaseError::fail(format!("unparsable: {}", rec.detailed_caption)))?;
    prop_assert_eq!(&high.figure, spec.figure_type.phrase());
    prop_assert_eq!(high.count, rec.labels.len());
    prop_assert_eq!(&high.labels, &rec.labels);
    prop_assert_eq!(sentences(&rec.high_caption), all[..3].to_vec());

    let parsed: Vec<RelationFact> = all[3..]
        .iter()
        .map(|s| parse_relation(s))
        .collect::<Option<_>>()
        .ok_or_else(|| TestCaseError::fail(format!("unparsable relation in {}", rec.detailed_caption)))?;
    prop_assert_eq!(&parsed, &rec.relations);
    for f in &parsed {
        prop_assert!(f.holds(spec));
    }

    let label_tokens: HashSet<String> = rec.labels.iter().flat_map(|l| tokenize(l)).collect();
    let named: HashSet<String> = high
        .labels
        .iter()
        .chain(
            parsed
                .iter()
                .flat_map(|f| std::iter::once(&f.subject).chain(f.object.as_ref())),
        )
        .flat_map(|l| tokenize(l))
        .collect();
    prop_assert!(named.is_subset(&label_tokens));

    for t in [&rec.high_caption, &rec.detailed_caption] {
        prop_assert_eq!(detokenize(&tokenize(t)), normalize(t));
        prop_assert_eq!(normalize(t), t.to_lowercase());
    }
    if !rec.relations.is_empty() {
        prop_assert!(tokenize(&rec.detailed_caption).len() > tokenize(&rec.high_caption).len());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn records_parse_back_to_their_facts(master in any::<u64>(), id in 0u64..1000) {
        let cfg = DatasetConfig::preset(Preset::Desk, master);
        let (rec, spec) = make_record(&cfg, "train", id).unwrap();
        check_record(&rec, &spec)?;
    }

    #[test]
    fn seeds_vary_the_wording_but_not_the_content(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let spec = sample_figure_spec(seed, None);
        let pa = parse_high(&sentences(&render_high_caption(&spec, a))).unwrap();
        let pb = parse_high(&sentences(&render_high_caption(&spec, b))).unwrap();
        prop_assert_eq!(pa, pb);
    }
}

fn figure_one() -> FigureSpec {
    let labels = ["Yellow", "Magenta", "Sky Blue", "Violet", "Lawn Green", "Dark Magenta"];
    FigureSpec {
        figure_type: FigureType::Line,
        series: labels
            .iter()
            .enumerate()
            .map(|(i, l)| Series {
                label: l.to_string(),
                values: vec![10.0 * i as f64, 10.0 * i as f64 + (i % 2) as f64 * 7.0, 3.0 * i as f64],
            })
            .collect(),
        x_points: vec![0.0, 1.0, 2.0],
        seed: 0,
        canvas: Canvas::default(),
    }
}

#[test]
fn six_label_line_plot() {
    let spec = figure_one();
    let text = render_high_caption(&spec, 5);
    assert_eq!(text, render_high_caption(&spec, 5));
    let high = parse_high(&sentences(&text)).unwrap();
    assert_eq!(high.figure, "line plot");
    assert_eq!(high.count, 6);
    assert_eq!(high.labels, spec.labels());
    let found = (0..64).any(|s| render_high_caption(&spec, s).starts_with("This is a line plot. It contains 6 categories."));
    assert!(found);
}

#[test]
fn smoothest_and_single_comparison() {
    let spec = figure_one();
    let facts = [RelationFact::unary(RelationKind::Smoothest, "Yellow")];
    assert!(facts[0].holds(&spec));
    let text = render_detailed_caption(&spec, &facts, 3).unwrap();
    let rels: Vec<RelationFact> = sentences(&text)[3..].iter().filter_map(|s| parse_relation(s)).collect();
    assert_eq!(rels, facts);
    assert!(text.contains("Yellow is the smoothest"));

    assert_eq!(render_detailed_caption(&spec, &[], 3).unwrap(), render_high_caption(&spec, 3));

    let gt = [RelationFact::binary(RelationKind::GreaterThan, "Dark Magenta", "Yellow")];
    for seed in 0..8 {
        let d = render_detailed_caption_with(&spec, &gt, seed, 4).unwrap();
        let rel = &sentences(&d.text)[3..];
        assert_eq!(rel.len(), 1);
        assert!(rel[0].starts_with("Dark Magenta is "));
        assert!(rel[0].ends_with(" than Yellow."));
        assert_eq!(parse_relation(&rel[0]).unwrap(), gt[0]);
    }
}

#[test]
fn desk_split_types_are_balanced() {
    let cfg = DatasetConfig::preset(Preset::Desk, 1);
    let summary = generate_dataset(&cfg, std::path::Path::new("/nonexistent"), true).unwrap();
    let sizes: Vec<usize> = summary.iter().map(|s| s.records).collect();
    assert_eq!(sizes, [2000, 200, 200]);
    for s in &summary {
        for &c in &s.per_type {
            assert!(c.abs_diff(s.records / 5) <= 1);
        }
    }
    let paper = generate_dataset(
        &DatasetConfig::preset(Preset::Paper, 0),
        std::path::Path::new("/nonexistent"),
        true,
    )
    .unwrap();
    let sizes: Vec<usize> = paper.iter().map(|s| s.records).collect();
    assert_eq!(sizes, [99_360, 5_000, 5_152]);
}
