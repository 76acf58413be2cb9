use serde::{Deserialize, Serialize};

use super::TrainError;

/// `L_sl = −Σ_t log p(y_t | ·)` over the teacher-forced reference tokens.
pub fn loss_mle(log_probs: &[f64]) -> Result<f64, TrainError> {
    if log_probs.is_empty() {
        return Err(TrainError::EmptySequence);
    }
    Ok(-log_probs.iter().sum::<f64>())
}

/// Which metric produced a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMetric {
    Cider,
}

/// Reward of one decoded sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    pub metric: RewardMetric,
    pub value: f64,
}

/// `L_rl = −(r(Ŷˢ) − r(Ŷᵇ)) · Σ_t log p(ŷˢ_t | ·)`, the advantage held constant.
pub fn loss_scst(sampled: Reward, greedy: Reward, sampled_log_prob: f64) -> Result<f64, TrainError> {
    if sampled.metric != greedy.metric {
        return Err(TrainError::MetricMismatch);
    }
    let advantage = sampled.value - greedy.value;
    if advantage == 0.0 {
        return Ok(0.0);
    }
    Ok(-advantage * sampled_log_prob)
}

/// `λ·L_rl + (1 − λ)·L_sl`.
pub fn loss_hybrid(l_rl: f64, l_sl: f64, lambda: f64) -> Result<f64, TrainError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(TrainError::LambdaOutOfRange(lambda));
    }
    if lambda == 0.0 {
        return Ok(l_sl);
    }
    if lambda == 1.0 {
        return Ok(l_rl);
    }
    Ok(lambda * l_rl + (1.0 - lambda) * l_sl)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// λ = 0 before `start`, rising linearly to 1 at `end`: MLE first, then RL.
    Ramp,
    /// λ = 1 before `start`, falling linearly to 0 at `end`.
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub kind: ScheduleKind,
    pub start: u64,
    pub end: u64,
}

impl LambdaSchedule {
    /// λ = 0 throughout.
    pub fn mle_only() -> Self {
        Self {
            kind: ScheduleKind::Ramp,
            start: u64::MAX,
            end: u64::MAX,
        }
    }
}

pub fn lambda_schedule(step: u64, s: &LambdaSchedule) -> f64 {
    let ramp = if step < s.start {
        0.0
    } else if step >= s.end {
        1.0
    } else {
        (step - s.start) as f64 / (s.end - s.start) as f64
    };
    match s.kind {
        ScheduleKind::Ramp => ramp,
        ScheduleKind::Decay => 1.0 - ramp,
    }
}
