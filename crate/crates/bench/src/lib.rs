//! Shared fixtures for the benchmarks.

use figcap_core::captioner::{Captioner, ModelConfig};
use figcap_core::captiongen::{build_vocab, make_record, DatasetConfig, Preset};
use figcap_core::figgen::{render, Canvas};
use figcap_core::{FigureSpec, RasterImage};

/// A rendered desk-preset figure with its labels and high-level caption.
pub struct Fixture {
    pub spec: FigureSpec,
    pub image: RasterImage,
    pub labels: Vec<String>,
    pub caption: String,
    pub detailed: String,
}

pub fn fixtures(n: u64, side: u32) -> Vec<Fixture> {
    let mut cfg = DatasetConfig::preset(Preset::Desk, 7);
    cfg.figures.canvas = Canvas {
        height: side,
        width: side,
    };
    (0..n)
        .map(|id| {
            let (rec, spec) = make_record(&cfg, "train", id).expect("desk record");
            Fixture {
                image: render(&spec).expect("render"),
                spec,
                labels: rec.labels,
                caption: rec.high_caption,
                detailed: rec.detailed_caption,
            }
        })
        .collect()
}

/// A freshly initialized captioner whose vocabulary covers `fixtures`.
pub fn model(fixtures: &[Fixture], config: ModelConfig) -> Captioner {
    let texts: Vec<&str> = fixtures.iter().map(|f| f.detailed.as_str()).collect();
    let vocab = build_vocab(&texts).expect("nonempty corpus");
    Captioner::new(config, vocab, 0).expect("valid model config")
}
