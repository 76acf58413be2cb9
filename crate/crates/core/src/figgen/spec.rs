use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::colors::{is_color_name, COLORS};
use super::FigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FigureType {
    #[serde(rename = "vbar")]
    VBar,
    #[serde(rename = "hbar")]
    HBar,
    #[serde(rename = "pie")]
    Pie,
    #[serde(rename = "line")]
    Line,
    #[serde(rename = "dot_line")]
    DotLine,
}

impl FigureType {
    pub const ALL: [FigureType; 5] = [
        FigureType::VBar,
        FigureType::HBar,
        FigureType::Pie,
        FigureType::Line,
        FigureType::DotLine,
    ];

    pub fn is_line(self) -> bool {
        matches!(self, FigureType::Line | FigureType::DotLine)
    }

    /// Phrase used in captions, e.g. "vertical bar chart".
    pub fn phrase(self) -> &'static str {
        match self {
            FigureType::VBar => "vertical bar chart",
            FigureType::HBar => "horizontal bar chart",
            FigureType::Pie => "pie chart",
            FigureType::Line => "line plot",
            FigureType::DotLine => "dot line plot",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).expect("listed")
    }
}

impl fmt::Display for FigureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phrase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub height: u32,
    pub width: u32,
}

impl Default for Canvas {
    fn default() -> Self {
        Self { height: 64, width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

/// Ground truth for one figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub figure_type: FigureType,
    pub series: Vec<Series>,
    /// Shared x grid of line figures; empty for bar and pie figures.
    pub x_points: Vec<f64>,
    pub seed: u64,
    pub canvas: Canvas,
}

/// Sampling ranges for [`sample_figure_spec_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FigGenConfig {
    pub max_series: usize,
    pub value_min: f64,
    pub value_max: f64,
    pub min_points: usize,
    pub max_points: usize,
    /// Largest absolute step of the line random walks.
    pub walk_step: f64,
    pub canvas: Canvas,
}

impl Default for FigGenConfig {
    fn default() -> Self {
        Self {
            max_series: 7,
            value_min: 1.0,
            value_max: 100.0,
            min_points: 5,
            max_points: 20,
            walk_step: 15.0,
            canvas: Canvas::default(),
        }
    }
}

impl FigGenConfig {
    pub fn validate(&self) -> Result<(), FigError> {
        let bad = |m: &str| Err(FigError::InvalidConfig(m.to_string()));
        if self.max_series < 2 || self.max_series > COLORS.len() {
            return bad("max_series must be in [2, 48]");
        }
        if !(self.value_min > 0.0 && self.value_min < self.value_max && self.value_max <= LINE_Y_MAX) {
            return bad("value range must satisfy 0 < min < max <= 100");
        }
        if self.min_points < 3 || self.min_points > self.max_points {
            return bad("point range must satisfy 3 <= min <= max");
        }
        if !(self.walk_step > 0.0) {
            return bad("walk_step must be positive");
        }
        Ok(())
    }
}

pub const LINE_Y_MAX: f64 = 100.0;

/// [`sample_figure_spec_with`] under the default ranges.
pub fn sample_figure_spec(seed: u64, figure_type: Option<FigureType>) -> FigureSpec {
    sample_figure_spec_with(seed, figure_type, &FigGenConfig::default())
}

/// Deterministically draws a figure from `seed`. When `figure_type` is
/// `None` the type is drawn uniformly from the five kinds.
pub fn sample_figure_spec_with(seed: u64, figure_type: Option<FigureType>, cfg: &FigGenConfig) -> FigureSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let figure_type = figure_type.unwrap_or_else(|| FigureType::ALL[rng.gen_range(0..FigureType::ALL.len())]);
    let n = rng.gen_range(2..=cfg.max_series);
    let labels: Vec<&str> = index::sample(&mut rng, COLORS.len(), n)
        .into_iter()
        .map(|i| COLORS[i].0)
        .collect();

    let (series, x_points) = if figure_type.is_line() {
        let k = rng.gen_range(cfg.min_points..=cfg.max_points);
        let xs: Vec<f64> = (0..k).map(|i| i as f64).collect();
        let series = labels
            .iter()
            .map(|&label| {
                let mut y = rng.gen_range(10.0..90.0);
                let values = (0..k)
                    .map(|i| {
                        if i > 0 {
                            y = (y + rng.gen_range(-cfg.walk_step..=cfg.walk_step)).clamp(0.0, LINE_Y_MAX);
                        }
                        y
                    })
                    .collect();
                Series {
                    label: label.to_string(),
                    values,
                }
            })
            .collect();
        (series, xs)
    } else {
        let series = labels
            .iter()
            .map(|&label| Series {
                label: label.to_string(),
                values: vec![rng.gen_range(cfg.value_min..=cfg.value_max)],
            })
            .collect();
        (series, Vec::new())
    };

    FigureSpec {
        figure_type,
        series,
        x_points,
        seed,
        canvas: cfg.canvas,
    }
}

impl FigureSpec {
    pub fn labels(&self) -> Vec<String> {
        self.series.iter().map(|s| s.label.clone()).collect()
    }

    pub fn series_by_label(&self, label: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.label == label)
    }

    /// Checks the structural invariants of a figure.
    pub fn validate(&self) -> Result<(), FigError> {
        let bad = |m: String| Err(FigError::InvalidSpec(m));
        let n = self.series.len();
        if n < 2 || n > COLORS.len() {
            return bad(format!("{n} series"));
        }
        for (i, s) in self.series.iter().enumerate() {
            if !is_color_name(&s.label) {
                return bad(format!("label {:?} is not in the color vocabulary", s.label));
            }
            if self.series[..i].iter().any(|o| o.label == s.label) {
                return bad(format!("duplicate label {:?}", s.label));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return bad(format!("non-finite value in {:?}", s.label));
            }
        }
        if self.figure_type.is_line() {
            let k = self.x_points.len();
            if k < 3 {
                return bad(format!("line figure with {k} points"));
            }
            if self.x_points.windows(2).any(|w| !(w[0] < w[1])) || self.x_points.iter().any(|x| !x.is_finite()) {
                return bad("x_points must be finite and strictly increasing".into());
            }
            if self.series.iter().any(|s| s.values.len() != k) {
                return bad("every line series must have one value per x point".into());
            }
        } else {
            if !self.x_points.is_empty() {
                return bad("bar and pie figures carry no x_points".into());
            }
            if self.series.iter().any(|s| s.values.len() != 1) {
                return bad("bar and pie series carry exactly one value".into());
            }
            if self.figure_type == FigureType::Pie && self.series.iter().any(|s| s.values[0] <= 0.0) {
                return bad("pie values must be positive".into());
            }
        }
        Ok(())
    }
}
