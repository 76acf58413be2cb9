//! On-disk dataset layout:
//!
//! ```text
//! <root>/config.json
//! <root>/<split>/captions.jsonl   one CaptionRecord per line, id order
//! <root>/<split>/figures.jsonl    the FigureSpec behind each record
//! <root>/<split>/images/<id>.png
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grammar::{render_detailed_caption_with, render_high_caption, DEFAULT_MAX_PAIRWISE};
use super::CaptionError;
use crate::figgen::{extract_relations, render, sample_figure_spec_with, FigGenConfig, FigureSpec, FigureType, RelationFact};
use crate::seed::mix;

pub const SPLITS: [&str; 3] = ["train", "val", "test"];
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const FIGURES_FILE: &str = "figures.jsonl";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub id: u64,
    pub figure_type: FigureType,
    pub labels: Vec<String>,
    pub high_caption: String,
    pub detailed_caption: String,
    pub relations: Vec<RelationFact>,
    pub seed: u64,
    pub image_path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: &str) -> Option<usize> {
        match split {
            "train" => Some(self.train),
            "val" => Some(self.val),
            "test" => Some(self.test),
            _ => None,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl Preset {
    pub fn sizes(self) -> SplitSizes {
        match self {
            Preset::Desk => SplitSizes {
                train: 2_000,
                val: 200,
                test: 200,
            },
            Preset::Paper => SplitSizes {
                train: 99_360,
                val: 5_000,
                test: 5_152,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub splits: SplitSizes,
    /// Cap on pairwise relation sentences per detailed caption.
    pub max_pairwise: usize,
    pub figures: FigGenConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self::preset(Preset::Paper, 0)
    }
}

impl DatasetConfig {
    pub fn preset(preset: Preset, master_seed: u64) -> Self {
        Self {
            master_seed,
            splits: preset.sizes(),
            max_pairwise: DEFAULT_MAX_PAIRWISE,
            figures: FigGenConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CaptionError> {
        self.figures.validate()?;
        if self.splits.train == 0 {
            return Err(CaptionError::InvalidConfig("the train split must be nonempty".into()));
        }
        let c = self.figures.canvas;
        if c.height < crate::figgen::MIN_CANVAS || c.width < crate::figgen::MIN_CANVAS {
            return Err(CaptionError::InvalidConfig(format!(
                "canvas {}x{} is smaller than 32x32",
                c.height, c.width
            )));
        }
        Ok(())
    }

    /// Global index of record `id` within `split` (splits are laid out in
    /// train, val, test order).
    fn global_index(&self, split: &str, id: u64) -> u64 {
        let offset = match split {
            "train" => 0,
            "val" => self.splits.train,
            _ => self.splits.train + self.splits.val,
        };
        offset as u64 + id
    }

    pub fn record_seed(&self, split: &str, id: u64) -> u64 {
        mix(self.master_seed, self.global_index(split, id))
    }
}

/// Figure types are assigned round-robin so every split is balanced to ±1.
pub fn figure_type_for(id: u64) -> FigureType {
    FigureType::ALL[(id % FigureType::ALL.len() as u64) as usize]
}

pub fn image_rel_path(id: u64) -> String {
    format!("images/{id:06}.png")
}

/// Builds record `id` of `split` and the figure behind it.
pub fn make_record(cfg: &DatasetConfig, split: &str, id: u64) -> Result<(CaptionRecord, FigureSpec), CaptionError> {
    let seed = cfg.record_seed(split, id);
    let spec = sample_figure_spec_with(seed, Some(figure_type_for(id)), &cfg.figures);
    let facts = extract_relations(&spec);
    let detailed = render_detailed_caption_with(&spec, &facts, seed, cfg.max_pairwise)?;
    let record = CaptionRecord {
        id,
        figure_type: spec.figure_type,
        labels: spec.labels(),
        high_caption: render_high_caption(&spec, seed),
        detailed_caption: detailed.text,
        relations: detailed.facts,
        seed,
        image_path: image_rel_path(id),
    };
    Ok((record, spec))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub split: String,
    pub records: usize,
    /// Records per figure type, in [`FigureType::ALL`] order.
    pub per_type: [usize; 5],
}

fn summarize(cfg: &DatasetConfig) -> Vec<SplitSummary> {
    SPLITS
        .iter()
        .map(|&split| {
            let n = cfg.splits.get(split).expect("known split");
            let mut per_type = [0; 5];
            for id in 0..n as u64 {
                per_type[figure_type_for(id).index()] += 1;
            }
            SplitSummary {
                split: split.to_string(),
                records: n,
                per_type,
            }
        })
        .collect()
}

/// Writes the dataset under `root`. With `dry_run` nothing is written and
/// only the planned counts are returned.
pub fn generate_dataset(cfg: &DatasetConfig, root: &Path, dry_run: bool) -> Result<Vec<SplitSummary>, CaptionError> {
    cfg.validate()?;
    let summary = summarize(cfg);
    if dry_run {
        return Ok(summary);
    }
    fs::create_dir_all(root)?;
    fs::write(root.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)? + "\n")?;

    const CHUNK: usize = 256;
    for &split in &SPLITS {
        let n = cfg.splits.get(split).expect("known split");
        let dir = root.join(split);
        fs::create_dir_all(dir.join("images"))?;
        let mut captions = BufWriter::new(File::create(dir.join(CAPTIONS_FILE))?);
        let mut figures = BufWriter::new(File::create(dir.join(FIGURES_FILE))?);
        for start in (0..n).step_by(CHUNK) {
            let ids: Vec<u64> = (start..(start + CHUNK).min(n)).map(|i| i as u64).collect();
            let built: Vec<(CaptionRecord, FigureSpec)> = ids
                .par_iter()
                .map(|&id| {
                    let (rec, spec) = make_record(cfg, split, id)?;
                    render(&spec)?.write_png(&dir.join(&rec.image_path))?;
                    Ok((rec, spec))
                })
                .collect::<Result<_, CaptionError>>()?;
            for (rec, spec) in &built {
                serde_json::to_writer(&mut captions, rec)?;
                captions.write_all(b"\n")?;
                serde_json::to_writer(&mut figures, spec)?;
                figures.write_all(b"\n")?;
            }
        }
        captions.flush()?;
        figures.flush()?;
    }
    Ok(summary)
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CaptionError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CaptionError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// One split of a generated dataset.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub dir: PathBuf,
    pub records: Vec<CaptionRecord>,
}

impl SplitData {
    pub fn load(root: &Path, split: &str) -> Result<Self, CaptionError> {
        let dir = root.join(split);
        let records = read_jsonl(&dir.join(CAPTIONS_FILE))?;
        Ok(Self { dir, records })
    }

    pub fn figures(&self) -> Result<Vec<FigureSpec>, CaptionError> {
        read_jsonl(&self.dir.join(FIGURES_FILE))
    }

    pub fn image_path(&self, rec: &CaptionRecord) -> PathBuf {
        self.dir.join(&rec.image_path)
    }
}

pub fn load_config(root: &Path) -> Result<DatasetConfig, CaptionError> {
    let text = fs::read_to_string(root.join(CONFIG_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
