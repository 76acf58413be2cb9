//! `figcap`: generate the synthetic dataset, train and evaluate captioners,
//! caption single figures and score caption files.
//!
//! Exit codes: 0 ok, 2 usage or configuration, 3 I/O, 4 numeric failure.

mod exit;
mod score;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use figcap_core::captioner::{AttnSet, Captioner};
use figcap_core::captiongen::{generate_dataset, load_config, tokenize, DatasetConfig, Preset};
use figcap_core::figgen::Canvas;
use figcap_core::trainer::{evaluate, load_examples, CaptionKind, LambdaSchedule, TrainConfig, Trainer};
use figcap_core::RasterImage;

use exit::usage;

/// Resolved training configuration stored next to every checkpoint.
const TRAIN_CONFIG_FILE: &str = "train_config.json";
const TRAIN_LOG_FILE: &str = "train_log.jsonl";
/// Decode cap for checkpoints that carry no training config.
const FALLBACK_MAX_LEN: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "figcap", version, about = "Figure captioning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CaptionArg {
    High,
    Detailed,
}

impl From<CaptionArg> for CaptionKind {
    fn from(c: CaptionArg) -> Self {
        match c {
            CaptionArg::High => CaptionKind::High,
            CaptionArg::Detailed => CaptionKind::Detailed,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render figures and write captions for the train/val/test splits.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Dataset config JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Square canvas side in pixels.
        #[arg(long)]
        canvas: Option<u32>,
        /// Print the planned counts without writing anything.
        #[arg(long)]
        dry_run: bool,
    },
    /// Train a captioner; writes the checkpoint, its config and a JSONL loss log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training config JSON; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// off, f, f+l, all (or any +-joined subset of f, r, l).
        #[arg(long)]
        attn: Option<String>,
        /// on: append a self-critical phase after MLE (or fine-tune an --init
        /// checkpoint); off: MLE only. Omitted: the config's schedule.
        #[arg(long, value_enum)]
        rl: Option<Switch>,
        /// Steps of the self-critical phase.
        #[arg(long, default_value_t = 150)]
        rl_steps: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// MLE steps (total steps when --rl is off).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long, value_enum)]
        caption: Option<CaptionArg>,
        /// Plain softmax output layer instead of sigmoid-then-softmax.
        #[arg(long)]
        linear_logits: bool,
        /// Continue from this checkpoint instead of a fresh model.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Greedy-decode a split and print the seven-metric report as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Score only the first N records (0 = all).
        #[arg(long, default_value_t = 0)]
        limit: usize,
    },
    /// Caption one PNG figure.
    Caption {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Comma-separated label names.
        #[arg(long)]
        labels: Option<String>,
    },
    /// Score candidate captions against references (both JSONL keyed by id).
    Score {
        #[arg(long)]
        cand: PathBuf,
        #[arg(long)]
        refs: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn banner(command: &str, seed: u64, config: &impl serde::Serialize) {
    let json = serde_json::to_string(config).unwrap_or_default();
    eprintln!("figcap {command} seed={seed} config={json}");
}

fn generate(
    out: &Path,
    config: Option<&Path>,
    preset: PresetArg,
    seed: Option<u64>,
    canvas: Option<u32>,
    dry_run: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => read_json::<DatasetConfig>(p)?,
        None => DatasetConfig::preset(
            match preset {
                PresetArg::Desk => Preset::Desk,
                PresetArg::Paper => Preset::Paper,
            },
            0,
        ),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    if let Some(side) = canvas {
        cfg.figures.canvas = Canvas {
            height: side,
            width: side,
        };
    }
    banner("generate", cfg.master_seed, &cfg);
    let summary = generate_dataset(&cfg, out, dry_run)?;
    for s in &summary {
        println!("{}: {} records", s.split, s.records);
    }
    if dry_run {
        println!("dry run: nothing written");
    } else {
        println!("wrote {}", out.display());
    }
    Ok(())
}

struct TrainArgs {
    data: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    attn: Option<String>,
    rl: Option<Switch>,
    rl_steps: u64,
    seed: Option<u64>,
    steps: Option<u64>,
    lr: Option<f64>,
    caption: Option<CaptionArg>,
    linear_logits: bool,
    init: Option<PathBuf>,
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => read_json::<TrainConfig>(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.steps {
        cfg.max_steps = n;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(c) = a.caption {
        cfg.caption = c.into();
    }
    if let Some(attn) = &a.attn {
        cfg.model.attention = attn.parse::<AttnSet>().map_err(|e| usage(e.to_string()))?;
    }
    if a.linear_logits {
        cfg.model.linear_logits = true;
    }
    let init = a.init.as_deref().map(Captioner::load).transpose()?;
    match a.rl {
        Some(Switch::On) => {
            let from = if init.is_some() { 0 } else { cfg.max_steps };
            cfg.enable_rl(from, a.rl_steps);
        }
        Some(Switch::Off) => cfg.schedule = LambdaSchedule::mle_only(),
        None => {}
    }
    let dataset = load_config(&a.data)?;
    cfg.model.canvas = dataset.figures.canvas;
    cfg.validate()?;
    if let Some(m) = &init {
        if m.config.canvas != cfg.model.canvas {
            return Err(usage("the --init checkpoint was trained on a different canvas"));
        }
    }

    let train = load_examples(&a.data, "train", cfg.caption, cfg.train_limit)?;
    let val = load_examples(&a.data, "val", cfg.caption, cfg.val_limit)?;
    let mut trainer = match init {
        Some(model) => Trainer::with_model(cfg, model, train, val)?,
        None => Trainer::new(cfg, train, val)?,
    };
    trainer.cfg.max_len = trainer.max_len;
    banner("train", trainer.cfg.seed, &trainer.cfg);

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    fs::write(
        a.out.join(TRAIN_CONFIG_FILE),
        serde_json::to_string_pretty(&trainer.cfg)? + "\n",
    )?;
    let mut log = BufWriter::new(File::create(a.out.join(TRAIN_LOG_FILE))?);
    let steps = trainer.run(&mut log, Some(&a.out))?;
    if let Some(last) = steps.last() {
        println!(
            "step {} L_sl {:.4} L_rl {:.4} lambda {:.3} val CIDEr {}",
            last.step,
            last.l_sl,
            last.l_rl,
            last.lambda,
            last.val_cider.map_or("n/a".into(), |c| format!("{c:.4}")),
        );
    }
    println!("saved {}", a.out.display());
    Ok(())
}

/// The checkpoint plus the caption kind and decode cap it was trained with.
fn load_checkpoint(dir: &Path) -> Result<(Captioner, CaptionKind, usize)> {
    let model = Captioner::load(dir)?;
    let cfg_path = dir.join(TRAIN_CONFIG_FILE);
    if cfg_path.exists() {
        let cfg: TrainConfig = read_json(&cfg_path)?;
        Ok((model, cfg.caption, cfg.max_len.max(1)))
    } else {
        Ok((model, CaptionKind::High, FALLBACK_MAX_LEN))
    }
}

fn eval(ckpt: &Path, data: &Path, split: SplitArg, limit: usize) -> Result<()> {
    let (model, kind, max_len) = load_checkpoint(ckpt)?;
    let split = match split {
        SplitArg::Val => "val",
        SplitArg::Test => "test",
    };
    banner(
        "eval",
        0,
        &serde_json::json!({ "split": split, "caption": kind, "max_len": max_len, "limit": limit }),
    );
    let examples = load_examples(data, split, kind, limit)?;
    let (report, _) = evaluate(&model, &examples, max_len)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn caption(ckpt: &Path, image: &Path, labels: Option<&str>) -> Result<()> {
    let (model, _, max_len) = load_checkpoint(ckpt)?;
    let labels: Vec<String> = labels
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if model.attention().label && labels.is_empty() {
        return Err(usage("this model attends to labels: pass --labels \"a,b,c\""));
    }
    for l in &labels {
        for w in tokenize(l) {
            if !model.vocab.contains(&w) {
                eprintln!("warning: label word {w:?} is not in the vocabulary and maps to <unk>");
            }
        }
    }
    let img = RasterImage::read_png(image)?;
    println!("{}", model.caption(&img, &labels, max_len)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            out,
            config,
            preset,
            seed,
            canvas,
            dry_run,
        } => generate(&out, config.as_deref(), preset, seed, canvas, dry_run),
        Command::Train {
            data,
            out,
            config,
            attn,
            rl,
            rl_steps,
            seed,
            steps,
            lr,
            caption,
            linear_logits,
            init,
        } => train(TrainArgs {
            data,
            out,
            config,
            attn,
            rl,
            rl_steps,
            seed,
            steps,
            lr,
            caption,
            linear_logits,
            init,
        }),
        Command::Eval {
            ckpt,
            data,
            split,
            limit,
        } => eval(&ckpt, &data, split, limit),
        Command::Caption { ckpt, image, labels } => caption(&ckpt, &image, labels.as_deref()),
        Command::Score { cand, refs } => {
            let report = score::score_files(&cand, &refs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code(&e))
        }
    }
}
