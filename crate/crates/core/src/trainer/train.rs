use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{CaptionKind, Example};
use super::losses::{lambda_schedule, loss_hybrid, loss_scst, LambdaSchedule, Reward, RewardMetric};
use super::TrainError;
use crate::captioner::{argmax, sample_from_log_probs, Captioner, ModelConfig};
use crate::captiongen::{build_vocab, EOS};
use crate::metrics::{cider_single, score_corpus, IdfTable, MetricReport};
use crate::ndgrad::{adam_step, AdamConfig, AdamState, Tensor};
use crate::seed::mix;

type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning rate for steps with λ > 0; 0 keeps `lr`.
    pub rl_lr: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub schedule: LambdaSchedule,
    pub reward: RewardMetric,
    pub seed: u64,
    /// Validation CIDEr is computed every this many steps (and at the end).
    pub log_every: u64,
    /// Intermediate checkpoints every this many steps; 0 keeps only the final one.
    pub checkpoint_every: u64,
    pub caption: CaptionKind,
    /// Decode length cap; 0 derives it from the longest training target.
    pub max_len: usize,
    /// Use only the first N training records (0 = all).
    pub train_limit: usize,
    /// Validate on the first N validation records (0 = all).
    pub val_limit: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            rl_lr: 0.0,
            batch_size: 16,
            max_steps: 1_000,
            schedule: LambdaSchedule::mle_only(),
            reward: RewardMetric::Cider,
            seed: 0,
            log_every: 100,
            checkpoint_every: 0,
            caption: CaptionKind::High,
            max_len: 0,
            train_limit: 0,
            val_limit: 100,
            clip_norm: 5.0,
            model: ModelConfig::default(),
        }
    }
}

/// Steps over which λ ramps from 0 to 1 once self-critical fine-tuning
/// starts. Phases shorter than this stay hybrid throughout; a pure λ = 1
/// phase straight after MLE degrades the captions at this scale.
pub const RL_RAMP_STEPS: u64 = 300;
/// Learning rate of the self-critical phase.
pub const RL_LR: f64 = 1e-4;

impl TrainConfig {
    /// Appends a self-critical phase of `rl_steps` steps after step `from`:
    /// λ ramps up over [`RL_RAMP_STEPS`] and the learning rate drops to
    /// [`RL_LR`] unless `rl_lr` is already set.
    pub fn enable_rl(&mut self, from: u64, rl_steps: u64) {
        self.schedule = LambdaSchedule {
            kind: super::losses::ScheduleKind::Ramp,
            start: from,
            end: from + RL_RAMP_STEPS,
        };
        self.max_steps = from + rl_steps;
        if self.rl_lr == 0.0 {
            self.rl_lr = RL_LR;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.rl_lr >= 0.0 && self.rl_lr.is_finite()) {
            return bad("rl_lr must be nonnegative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.schedule.start > self.schedule.end {
            return bad("schedule start must not exceed end");
        }
        if self.log_every == 0 {
            return bad("log_every must be positive");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be nonnegative");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    #[serde(rename = "L_sl")]
    pub l_sl: f64,
    #[serde(rename = "L_rl")]
    pub l_rl: f64,
    #[serde(rename = "L_hybrid")]
    pub l_hybrid: f64,
    pub lambda: f64,
    pub val_cider: Option<f64>,
}

/// Everything one self-critical episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub sampled: Vec<usize>,
    pub sampled_log_prob: f64,
    pub greedy: Vec<usize>,
    pub reward_sampled: f64,
    pub reward_greedy: f64,
    pub l_rl: f64,
}

/// Losses and parameter gradients for one training pair.
#[derive(Debug, Clone)]
pub struct SampleGrads {
    pub l_sl: f64,
    pub l_rl: f64,
    pub episode: Option<EpisodeOutcome>,
    /// In the model's parameter order.
    pub grads: Vec<Tensor>,
}

/// What to optimize for one image.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Teacher-forced MLE on the reference ids (ending in EOS).
    Mle(&'a [usize]),
    /// Hybrid loss with a fresh sample and greedy baseline scored against
    /// `reference` under `idf`.
    Hybrid {
        targets: &'a [usize],
        reference: &'a [String],
        idf: &'a IdfTable,
        lambda: f64,
        sample_seed: u64,
        max_len: usize,
    },
    /// Policy-gradient term for a given sequence with a fixed advantage.
    PolicyGradient { tokens: &'a [usize], advantage: f64 },
}

/// Forward and backward pass for one image.
pub fn sample_gradients(
    model: &Captioner,
    image: &crate::figgen::RasterImage,
    labels: &[String],
    obj: Objective<'_>,
) -> Result<SampleGrads> {
    let mut ep = model.episode(image, labels)?;
    let mut terms = Vec::new();
    let (mut l_sl, mut l_rl, mut outcome) = (0.0, 0.0, None);
    match obj {
        Objective::Mle(targets) => {
            let lp = ep.sequence_log_prob(targets)?;
            l_sl = -ep.tape.value(lp).item();
            terms.push(ep.tape.scale(lp, -1.0));
        }
        Objective::PolicyGradient { tokens, advantage } => {
            let lp = ep.sequence_log_prob(tokens)?;
            l_rl = -advantage * ep.tape.value(lp).item();
            terms.push(ep.tape.scale(lp, -advantage));
        }
        Objective::Hybrid {
            targets,
            reference,
            idf,
            lambda,
            sample_seed,
            max_len,
        } => {
            if lambda < 1.0 {
                let lp = ep.sequence_log_prob(targets)?;
                l_sl = -ep.tape.value(lp).item();
                terms.push(ep.tape.scale(lp, -(1.0 - lambda)));
            }
            if lambda > 0.0 {
                ep.restart();
                let (greedy, _) = ep.decode(max_len, argmax, false)?;
                ep.restart();
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                let (sampled, lp) = ep.decode(max_len, |row| sample_from_log_probs(row, &mut rng), true)?;
                let lp = lp.expect("recorded decode returns a log-probability");
                let refs = [reference.to_vec()];
                let score = |ids: &[usize]| -> Result<Reward> {
                    Ok(Reward {
                        metric: RewardMetric::Cider,
                        value: cider_single(&model.vocab.decode_tokens(ids), &refs, idf)?,
                    })
                };
                let (rs, rb) = (score(&sampled.tokens)?, score(&greedy.tokens)?);
                let sampled_log_prob = ep.tape.value(lp).item();
                l_rl = loss_scst(rs, rb, sampled_log_prob)?;
                terms.push(ep.tape.scale(lp, -lambda * (rs.value - rb.value)));
                outcome = Some(EpisodeOutcome {
                    sampled: sampled.tokens,
                    sampled_log_prob,
                    greedy: greedy.tokens,
                    reward_sampled: rs.value,
                    reward_greedy: rb.value,
                    l_rl,
                });
            }
        }
    }
    let loss = ep.tape.add_all(&terms).map_err(crate::captioner::CaptionerError::from)?;
    let mut grads = ep.tape.backward(loss).map_err(crate::captioner::CaptionerError::from)?;
    Ok(SampleGrads {
        l_sl,
        l_rl,
        episode: outcome,
        grads: ep.bindings.collect_grads(&mut grads),
    })
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

/// Applies one Adam update with the given gradients (in parameter order).
pub fn apply_gradients(model: &mut Captioner, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let mut params = model.params.tensors_mut();
    adam_step(&mut params, grads, state, cfg).map_err(crate::captioner::CaptionerError::from)?;
    Ok(())
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Captioner,
    pub step: u64,
    pub max_len: usize,
    adam: AdamState,
    adam_cfg: AdamConfig,
    train: Vec<Example>,
    targets: Vec<Vec<usize>>,
    train_idf: IdfTable,
    val: Vec<Example>,
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl Trainer {
    /// Builds the vocabulary from the training references and initializes
    /// the model from `cfg.seed`.
    pub fn new(cfg: TrainConfig, train: Vec<Example>, val: Vec<Example>) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::InvalidConfig("no training examples".into()));
        }
        let texts: Vec<String> = train.iter().map(|e| e.reference.join(" ")).collect();
        let vocab = build_vocab(&texts)?;
        let model = Captioner::new(cfg.model.clone(), vocab, cfg.seed)?;
        Self::with_model(cfg, model, train, val)
    }

    /// Continues training `model` (vocabulary and weights included) with
    /// fresh optimizer state; `cfg.model` is replaced by the model's own
    /// configuration.
    pub fn with_model(mut cfg: TrainConfig, model: Captioner, train: Vec<Example>, val: Vec<Example>) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::InvalidConfig("no training examples".into()));
        }
        cfg.model = model.config.clone();
        if let Some(t) = train.iter().flat_map(|e| &e.reference).find(|t| !model.vocab.contains(t)) {
            return Err(TrainError::VocabMismatch(format!(
                "training token {t:?} is not in the model vocabulary"
            )));
        }
        let targets: Vec<Vec<usize>> = train
            .iter()
            .map(|e| {
                let mut ids: Vec<usize> = e.reference.iter().map(|t| model.vocab.id(t)).collect();
                ids.push(EOS);
                ids
            })
            .collect();
        let max_len = if cfg.max_len > 0 {
            cfg.max_len
        } else {
            targets.iter().map(Vec::len).max().unwrap_or(1) + 4
        };
        let refs: Vec<Vec<Vec<String>>> = train.iter().map(|e| vec![e.reference.clone()]).collect();
        let train_idf = IdfTable::build(&refs)?;
        let mut t = Self {
            adam_cfg: AdamConfig::with_lr(cfg.lr),
            cfg,
            model,
            step: 0,
            max_len,
            adam: AdamState::new(),
            train,
            targets,
            train_idf,
            val,
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
        };
        t.reshuffle();
        Ok(t)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.cfg.seed, 0x5348_5546 + self.epoch));
        self.order.shuffle(&mut rng);
        self.cursor = 0;
        self.epoch += 1;
    }

    fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.cfg.batch_size);
        while batch.len() < self.cfg.batch_size.min(self.train.len()) {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }

    pub fn lambda(&self) -> f64 {
        lambda_schedule(self.step, &self.cfg.schedule)
    }

    /// One optimizer step over the next batch.
    pub fn train_step(&mut self) -> Result<StepLog> {
        let lambda = self.lambda();
        let batch = self.next_batch();
        let step = self.step;
        let base = mix(self.cfg.seed ^ 0x5343_5354, step);
        let model = &self.model;
        let results: Vec<Result<SampleGrads>> = batch
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let ex = &self.train[i];
                let obj = if lambda == 0.0 {
                    Objective::Mle(&self.targets[i])
                } else {
                    Objective::Hybrid {
                        targets: &self.targets[i],
                        reference: &ex.reference,
                        idf: &self.train_idf,
                        lambda,
                        sample_seed: mix(base, k as u64),
                        max_len: self.max_len,
                    }
                };
                sample_gradients(model, &ex.image, &ex.labels, obj)
            })
            .collect();

        let n = batch.len() as f64;
        let (mut l_sl, mut l_rl) = (0.0, 0.0);
        let mut total: Option<Vec<Tensor>> = None;
        for r in results {
            let r = r?;
            l_sl += r.l_sl / n;
            l_rl += r.l_rl / n;
            match &mut total {
                None => total = Some(r.grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&r.grads) {
                        a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                    }
                }
            }
        }
        let mut grads = total.expect("batch is nonempty");
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x /= n);
        }
        let l_hybrid = loss_hybrid(l_rl, l_sl, lambda)?;
        if !l_hybrid.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(TrainError::NonFiniteLoss { step });
        }
        clip_global_norm(&mut grads, self.cfg.clip_norm);
        self.adam_cfg.lr = if lambda > 0.0 && self.cfg.rl_lr > 0.0 {
            self.cfg.rl_lr
        } else {
            self.cfg.lr
        };
        apply_gradients(&mut self.model, &grads, &mut self.adam, &self.adam_cfg)?;
        self.step += 1;
        Ok(StepLog {
            step,
            l_sl,
            l_rl,
            l_hybrid,
            lambda,
            val_cider: None,
        })
    }

    /// Greedy-decodes the validation examples and scores them.
    pub fn validate(&self) -> Result<Option<MetricReport>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        Ok(Some(evaluate(&self.model, &self.val, self.max_len)?.0))
    }

    /// Runs to `max_steps`, writing one JSON line per step to `log` and
    /// checkpoints into `ckpt_dir` (if given).
    pub fn run(&mut self, log: &mut dyn Write, ckpt_dir: Option<&Path>) -> Result<Vec<StepLog>> {
        let mut out = Vec::new();
        while self.step < self.cfg.max_steps {
            let mut entry = self.train_step()?;
            let done = self.step == self.cfg.max_steps;
            if self.step % self.cfg.log_every == 0 || done {
                entry.val_cider = self.validate()?.map(|r| r.cider);
            }
            serde_json::to_writer(&mut *log, &entry).map_err(|e| TrainError::Io(e.into()))?;
            log.write_all(b"\n")?;
            if let Some(dir) = ckpt_dir {
                if self.cfg.checkpoint_every > 0 && self.step % self.cfg.checkpoint_every == 0 && !done {
                    self.model.save(&dir.join(format!("step-{:06}", self.step)))?;
                }
            }
            out.push(entry);
        }
        log.flush()?;
        if let Some(dir) = ckpt_dir {
            self.model.save(dir)?;
        }
        Ok(out)
    }
}

/// Greedy captions for `examples` and the seven-metric report against
/// their references (CIDEr idf from these references).
pub fn evaluate(model: &Captioner, examples: &[Example], max_len: usize) -> Result<(MetricReport, Vec<Vec<String>>)> {
    if examples.is_empty() {
        return Err(TrainError::InvalidConfig("nothing to evaluate".into()));
    }
    let cands: Vec<Vec<String>> = examples
        .par_iter()
        .map(|e| {
            let d = model.decode_greedy(&e.image, &e.labels, max_len)?;
            Ok(model.vocab.decode_tokens(&d.tokens))
        })
        .collect::<Result<_>>()?;
    let refs: Vec<Vec<Vec<String>>> = examples.iter().map(|e| vec![e.reference.clone()]).collect();
    let (report, _) = score_corpus(&cands, &refs)?;
    Ok((report, cands))
}
