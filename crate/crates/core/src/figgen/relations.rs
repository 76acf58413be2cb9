//! Logical facts about a figure's data.
//!
//! Superlatives require a strict, untied extremum. Median is defined only
//! for an odd number of series. Line comparisons use each series' peak.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::spec::{FigureSpec, FigureType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Maximum,
    Minimum,
    GreaterThan,
    LessThan,
    Median,
    HighestValue,
    LowestValue,
    MaxAuc,
    MinAuc,
    Smoothest,
    Roughest,
    Intersects,
}

impl RelationKind {
    pub const BAR_KINDS: [RelationKind; 5] = [
        RelationKind::Maximum,
        RelationKind::Minimum,
        RelationKind::GreaterThan,
        RelationKind::LessThan,
        RelationKind::Median,
    ];

    pub const LINE_KINDS: [RelationKind; 9] = [
        RelationKind::HighestValue,
        RelationKind::LowestValue,
        RelationKind::GreaterThan,
        RelationKind::LessThan,
        RelationKind::MaxAuc,
        RelationKind::MinAuc,
        RelationKind::Smoothest,
        RelationKind::Roughest,
        RelationKind::Intersects,
    ];

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            RelationKind::GreaterThan | RelationKind::LessThan | RelationKind::Intersects
        )
    }

    pub fn allowed_for(self, ty: FigureType) -> bool {
        if ty.is_line() {
            Self::LINE_KINDS.contains(&self)
        } else {
            Self::BAR_KINDS.contains(&self)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationFact {
    pub kind: RelationKind,
    pub subject: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl RelationFact {
    pub fn unary(kind: RelationKind, subject: impl Into<String>) -> Self {
        Self {
            kind,
            subject: subject.into(),
            object: None,
        }
    }

    pub fn binary(kind: RelationKind, subject: impl Into<String>, object: impl Into<String>) -> Self {
        Self {
            kind,
            subject: subject.into(),
            object: Some(object.into()),
        }
    }

    /// Re-derives this fact from the figure data.
    pub fn holds(&self, spec: &FigureSpec) -> bool {
        if !self.kind.allowed_for(spec.figure_type) || self.kind.is_binary() != self.object.is_some() {
            return false;
        }
        let Some(si) = spec.series.iter().position(|s| s.label == self.subject) else {
            return false;
        };
        let oi = match &self.object {
            Some(o) => match spec.series.iter().position(|s| &s.label == o) {
                Some(i) if i != si => Some(i),
                _ => return false,
            },
            None => None,
        };
        let stats = SeriesStats::of(spec);
        let strictly_max = |v: &[f64]| v.iter().enumerate().all(|(i, &x)| i == si || v[si] > x);
        let strictly_min = |v: &[f64]| v.iter().enumerate().all(|(i, &x)| i == si || v[si] < x);
        match self.kind {
            RelationKind::Maximum | RelationKind::HighestValue => strictly_max(&stats.peak),
            RelationKind::Minimum => strictly_min(&stats.peak),
            RelationKind::LowestValue => strictly_min(&stats.trough),
            RelationKind::MaxAuc => strictly_max(&stats.auc),
            RelationKind::MinAuc => strictly_min(&stats.auc),
            RelationKind::Smoothest => strictly_min(&stats.roughness),
            RelationKind::Roughest => strictly_max(&stats.roughness),
            RelationKind::Median => {
                let n = stats.peak.len();
                let v = stats.peak[si];
                let below = stats.peak.iter().filter(|&&x| x < v).count();
                let above = stats.peak.iter().filter(|&&x| x > v).count();
                n % 2 == 1 && below == n / 2 && above == n / 2
            }
            RelationKind::GreaterThan => stats.peak[si] > stats.peak[oi.expect("binary")],
            RelationKind::LessThan => stats.peak[si] < stats.peak[oi.expect("binary")],
            RelationKind::Intersects => lines_meet(&spec.series[si].values, &spec.series[oi.expect("binary")].values),
        }
    }
}

impl fmt::Display for RelationFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.object {
            Some(o) => write!(f, "{:?}({}, {})", self.kind, self.subject, o),
            None => write!(f, "{:?}({})", self.kind, self.subject),
        }
    }
}

/// Per-series summary statistics used by the relation predicates.
#[derive(Debug, Clone)]
pub struct SeriesStats {
    pub peak: Vec<f64>,
    pub trough: Vec<f64>,
    pub auc: Vec<f64>,
    pub roughness: Vec<f64>,
}

impl SeriesStats {
    pub fn of(spec: &FigureSpec) -> Self {
        let xs = &spec.x_points;
        let peak = spec
            .series
            .iter()
            .map(|s| s.values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let trough = spec
            .series
            .iter()
            .map(|s| s.values.iter().copied().fold(f64::INFINITY, f64::min))
            .collect();
        let auc = spec.series.iter().map(|s| trapezoid_area(xs, &s.values)).collect();
        let roughness = spec.series.iter().map(|s| mean_abs_second_difference(&s.values)).collect();
        Self {
            peak,
            trough,
            auc,
            roughness,
        }
    }
}

pub fn trapezoid_area(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Mean of `|y[i+1] − 2y[i] + y[i−1]|`; lower is smoother.
pub fn mean_abs_second_difference(ys: &[f64]) -> f64 {
    if ys.len() < 3 {
        return 0.0;
    }
    let total: f64 = ys.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).sum();
    total / (ys.len() - 2) as f64
}

/// Whether two polylines on a shared x grid cross or touch. On each grid
/// interval the difference is linear, so a sign change or a zero at an
/// endpoint is exact.
pub fn lines_meet(a: &[f64], b: &[f64]) -> bool {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    d.iter().any(|&v| v == 0.0) || d.windows(2).any(|w| (w[0] < 0.0) != (w[1] < 0.0))
}

/// Index of the unique strict extremum, or `None` on ties.
fn unique_arg(values: &[f64], better: impl Fn(f64, f64) -> bool) -> Option<usize> {
    let mut best = 0;
    for i in 1..values.len() {
        if better(values[i], values[best]) {
            best = i;
        }
    }
    let tied = values.iter().enumerate().any(|(i, &v)| i != best && !better(values[best], v));
    (!tied).then_some(best)
}

fn unique_max(values: &[f64]) -> Option<usize> {
    unique_arg(values, |a, b| a > b)
}

fn unique_min(values: &[f64]) -> Option<usize> {
    unique_arg(values, |a, b| a < b)
}

fn unique_median(values: &[f64]) -> Option<usize> {
    let n = values.len();
    if n % 2 == 0 {
        return None;
    }
    values
        .iter()
        .position(|&v| values.iter().filter(|&&x| x < v).count() == n / 2 && values.iter().filter(|&&x| x > v).count() == n / 2)
}

/// Every true fact of the kinds allowed for the figure type, in a fixed
/// order: superlatives first, then ordered comparisons, then intersections.
pub fn extract_relations(spec: &FigureSpec) -> Vec<RelationFact> {
    let stats = SeriesStats::of(spec);
    let label = |i: usize| spec.series[i].label.clone();
    let mut facts = Vec::new();
    let mut push_unary = |kind, idx: Option<usize>| {
        if let Some(i) = idx {
            facts.push(RelationFact::unary(kind, label(i)));
        }
    };

    if spec.figure_type.is_line() {
        push_unary(RelationKind::HighestValue, unique_max(&stats.peak));
        push_unary(RelationKind::LowestValue, unique_min(&stats.trough));
        push_unary(RelationKind::MaxAuc, unique_max(&stats.auc));
        push_unary(RelationKind::MinAuc, unique_min(&stats.auc));
        push_unary(RelationKind::Smoothest, unique_min(&stats.roughness));
        push_unary(RelationKind::Roughest, unique_max(&stats.roughness));
    } else {
        push_unary(RelationKind::Maximum, unique_max(&stats.peak));
        push_unary(RelationKind::Minimum, unique_min(&stats.peak));
        push_unary(RelationKind::Median, unique_median(&stats.peak));
    }

    let n = spec.series.len();
    for i in 0..n {
        for j in 0..n {
            if stats.peak[i] > stats.peak[j] {
                facts.push(RelationFact::binary(RelationKind::GreaterThan, label(i), label(j)));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if stats.peak[i] < stats.peak[j] {
                facts.push(RelationFact::binary(RelationKind::LessThan, label(i), label(j)));
            }
        }
    }
    if spec.figure_type.is_line() {
        for i in 0..n {
            for j in i + 1..n {
                if lines_meet(&spec.series[i].values, &spec.series[j].values) {
                    facts.push(RelationFact::binary(RelationKind::Intersects, label(i), label(j)));
                }
            }
        }
    }
    facts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::figgen::spec::{Canvas, Series};
    use RelationKind::*;

    fn fig(ty: FigureType, data: &[(&str, &[f64])], xs: &[f64]) -> FigureSpec {
        FigureSpec {
            figure_type: ty,
            series: data
                .iter()
                .map(|(l, v)| Series {
                    label: l.to_string(),
                    values: v.to_vec(),
                })
                .collect(),
            x_points: xs.to_vec(),
            seed: 0,
            canvas: Canvas::default(),
        }
    }

    #[test]
    fn three_bars_complete_fact_set() {
        let s = fig(FigureType::VBar, &[("Red", &[3.0]), ("Blue", &[1.0]), ("Gold", &[2.0])], &[]);
        let got = extract_relations(&s);
        let want = vec![
            RelationFact::unary(Maximum, "Red"),
            RelationFact::unary(Minimum, "Blue"),
            RelationFact::unary(Median, "Gold"),
            RelationFact::binary(GreaterThan, "Red", "Blue"),
            RelationFact::binary(GreaterThan, "Red", "Gold"),
            RelationFact::binary(GreaterThan, "Gold", "Blue"),
            RelationFact::binary(LessThan, "Blue", "Red"),
            RelationFact::binary(LessThan, "Blue", "Gold"),
            RelationFact::binary(LessThan, "Gold", "Red"),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn crossing_lines_with_equal_area() {
        let s = fig(
            FigureType::Line,
            &[("Red", &[0.0, 1.0, 2.0]), ("Blue", &[2.0, 1.0, 0.0])],
            &[0.0, 1.0, 2.0],
        );
        let got = extract_relations(&s);
        assert!(got.contains(&RelationFact::binary(Intersects, "Red", "Blue")));
        assert!(!got.iter().any(|f| f.kind == MaxAuc || f.kind == MinAuc));
    }

    #[test]
    fn flat_versus_bump() {
        let s = fig(
            FigureType::Line,
            &[("Red", &[0.0, 0.0, 0.0]), ("Blue", &[0.0, 5.0, 0.0])],
            &[0.0, 1.0, 2.0],
        );
        let got = extract_relations(&s);
        for f in [
            RelationFact::unary(Smoothest, "Red"),
            RelationFact::unary(Roughest, "Blue"),
            RelationFact::unary(MaxAuc, "Blue"),
            RelationFact::unary(MinAuc, "Red"),
            RelationFact::unary(HighestValue, "Blue"),
        ] {
            assert!(got.contains(&f), "missing {f}");
        }
        // Both troughs are 0.
        assert!(!got.iter().any(|f| f.kind == LowestValue));
        assert!(got.iter().all(|f| f.holds(&s)));
    }

    #[test]
    fn ties_suppress_superlatives() {
        let s = fig(
            FigureType::Pie,
            &[("Red", &[5.0]), ("Blue", &[5.0]), ("Gold", &[1.0]), ("Teal", &[2.0])],
            &[],
        );
        let got = extract_relations(&s);
        assert!(!got.iter().any(|f| f.kind == Maximum || f.kind == Median));
        assert!(got.contains(&RelationFact::unary(Minimum, "Gold")));
        assert!(!got.contains(&RelationFact::binary(GreaterThan, "Red", "Blue")));
    }

    #[test]
    fn holds_rejects_false_and_misplaced_facts() {
        let s = fig(FigureType::HBar, &[("Red", &[3.0]), ("Blue", &[1.0])], &[]);
        assert!(!RelationFact::unary(Maximum, "Blue").holds(&s));
        assert!(!RelationFact::unary(Smoothest, "Red").holds(&s));
        assert!(!RelationFact::binary(GreaterThan, "Red", "Red").holds(&s));
        assert!(!RelationFact::binary(GreaterThan, "Red", "Gold").holds(&s));
        assert!(!RelationFact::unary(GreaterThan, "Red").holds(&s));
        assert!(RelationFact::binary(GreaterThan, "Red", "Blue").holds(&s));
    }

    #[test]
    fn touching_counts_as_meeting() {
        assert!(lines_meet(&[0.0, 1.0, 0.0], &[2.0, 1.0, 2.0]));
        assert!(!lines_meet(&[0.0, 0.9, 0.0], &[2.0, 1.0, 2.0]));
        assert!(lines_meet(&[0.0, 3.0], &[1.0, 2.0]));
    }
}
