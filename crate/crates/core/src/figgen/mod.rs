//! Synthetic figures: spec sampling, rasterization and ground-truth
//! relation facts.

mod colors;
mod relations;
mod render;
mod spec;

use thiserror::Error;

pub use colors::{color_of, is_color_name, AXIS_RGB, BACKGROUND_RGB, COLORS};
pub use relations::{
    extract_relations, lines_meet, mean_abs_second_difference, trapezoid_area, RelationFact, RelationKind, SeriesStats,
};
pub use render::{render, RasterImage, MIN_CANVAS};
pub use spec::{sample_figure_spec, sample_figure_spec_with, Canvas, FigGenConfig, FigureSpec, FigureType, Series, LINE_Y_MAX};

#[derive(Debug, Error)]
pub enum FigError {
    #[error("canvas {height}x{width} is smaller than 32x32")]
    CanvasTooSmall { height: u32, width: u32 },
    #[error("invalid figure spec: {0}")]
    InvalidSpec(String),
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("png: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
