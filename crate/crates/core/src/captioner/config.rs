use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CaptionerError;
use crate::figgen::Canvas;

/// Which attention contexts feed the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttnSet {
    pub feature: bool,
    pub relation: bool,
    pub label: bool,
}

impl AttnSet {
    pub const NONE: AttnSet = AttnSet {
        feature: false,
        relation: false,
        label: false,
    };
    pub const F: AttnSet = AttnSet {
        feature: true,
        relation: false,
        label: false,
    };
    pub const FL: AttnSet = AttnSet {
        feature: true,
        relation: false,
        label: true,
    };
    pub const ALL: AttnSet = AttnSet {
        feature: true,
        relation: true,
        label: true,
    };

    pub fn any(self) -> bool {
        self.feature || self.relation || self.label
    }
}

impl FromStr for AttnSet {
    type Err = CaptionerError;

    /// Accepts `off`, `f`, `f+l`, `all`, or any `+`-joined subset of `f`, `r`, `l`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => return Ok(AttnSet::NONE),
            "all" => return Ok(AttnSet::ALL),
            _ => {}
        }
        let mut set = AttnSet::NONE;
        for part in s.split('+') {
            match part {
                "f" => set.feature = true,
                "r" => set.relation = true,
                "l" => set.label = true,
                _ => return Err(CaptionerError::InvalidConfig(format!("unknown attention set {s:?}"))),
            }
        }
        Ok(set)
    }
}

impl fmt::Display for AttnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == AttnSet::ALL {
            return f.write_str("all");
        }
        let parts: Vec<&str> = [(self.feature, "f"), (self.relation, "r"), (self.label, "l")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|&(_, n)| n)
            .collect();
        if parts.is_empty() {
            f.write_str("off")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub canvas: Canvas,
    /// Output channels of the first two conv layers; the third emits `feat_dim`.
    pub conv_channels: [usize; 2],
    pub kernel: usize,
    /// d: feature vector width.
    pub feat_dim: usize,
    /// d̂: relation vector width (and relation MLP hidden width).
    pub rel_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Width of the attention scoring space.
    pub att_dim: usize,
    pub attention: AttnSet,
    /// Replace the sigmoid-then-softmax output layer with plain softmax.
    pub linear_logits: bool,
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            canvas: Canvas::default(),
            conv_channels: [16, 24],
            kernel: 3,
            feat_dim: 32,
            rel_dim: 24,
            embed_dim: 32,
            hidden: 64,
            att_dim: 32,
            attention: AttnSet::ALL,
            linear_logits: false,
            vocab_size: 0,
        }
    }
}

impl ModelConfig {
    /// Decoder with a 256-unit LSTM.
    pub fn wide(vocab_size: usize) -> Self {
        Self {
            hidden: 256,
            vocab_size,
            ..Self::default()
        }
    }

    pub fn grid(&self) -> (usize, usize) {
        let down = |x: u32| {
            let mut x = x as usize;
            for _ in 0..3 {
                x = (x - 1) / 2 + 1;
            }
            x
        };
        (down(self.canvas.height), down(self.canvas.width))
    }

    /// m: number of feature vectors.
    pub fn positions(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    /// Width of the decoder context `d_t`.
    pub fn context_dim(&self) -> usize {
        let a = self.attention;
        a.feature as usize * self.feat_dim + a.relation as usize * self.rel_dim + a.label as usize * self.embed_dim
    }

    pub fn validate(&self) -> Result<(), CaptionerError> {
        let bad = |m: &str| Err(CaptionerError::InvalidConfig(m.to_string()));
        if self.canvas.height < crate::figgen::MIN_CANVAS || self.canvas.width < crate::figgen::MIN_CANVAS {
            return bad("canvas must be at least 32x32");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel size must be odd");
        }
        let dims = [
            self.conv_channels[0],
            self.conv_channels[1],
            self.feat_dim,
            self.rel_dim,
            self.embed_dim,
            self.hidden,
            self.att_dim,
        ];
        if dims.contains(&0) {
            return bad("all widths must be positive");
        }
        if self.vocab_size <= crate::captiongen::SPECIALS.len() {
            return bad("vocabulary must contain tokens beyond the specials");
        }
        Ok(())
    }
}
