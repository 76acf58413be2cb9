use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    attend, attention_keys, build_label_maps, build_relation_maps, encode, init_state, lstm_step, make_context, predict_log,
    AttnVars, ConvVars, DecoderState, GateVars, LstmVars, OutputVars, RelationVars,
};
use super::{AttnSet, CaptionerError, ModelConfig};
use crate::captiongen::{Vocabulary, EOS};
use crate::figgen::RasterImage;
use crate::ndgrad::{load_checkpoint, save_checkpoint, Bindings, ParamSet, Tape, Tensor, Var};

type Result<T> = std::result::Result<T, CaptionerError>;

const GATES: [&str; 3] = ["i", "f", "o"];

/// Every learnable tensor, initialized uniformly in ±1/√fan_in (biases
/// zero, forget-gate bias one).
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let mut w = |ps: &mut ParamSet, name: &str, shape: &[usize], fan_in: usize| {
        ps.insert(name, Tensor::uniform(shape, 1.0 / (fan_in as f64).sqrt(), &mut rng));
    };

    let k = cfg.kernel;
    let chans = [3, cfg.conv_channels[0], cfg.conv_channels[1], cfg.feat_dim];
    for l in 0..3 {
        let (ci, co) = (chans[l], chans[l + 1]);
        w(&mut ps, &format!("enc.conv{}.w", l + 1), &[co, ci, k, k], ci * k * k);
        ps.insert(format!("enc.conv{}.b", l + 1), Tensor::zeros(&[co]));
    }

    let (d, dr, e, hdim, a) = (cfg.feat_dim, cfg.rel_dim, cfg.embed_dim, cfg.hidden, cfg.att_dim);
    w(&mut ps, "rel.w1a", &[d, dr], 2 * d);
    w(&mut ps, "rel.w1b", &[d, dr], 2 * d);
    ps.insert("rel.b1", Tensor::zeros(&[1, dr]));
    w(&mut ps, "rel.w2", &[dr, dr], dr);
    ps.insert("rel.b2", Tensor::zeros(&[1, dr]));

    for (att, (wn, un, vn), dx) in [
        ("att_f", ("W_a", "U_a", "v_a"), d),
        ("att_r", ("W_b", "U_b", "v_b"), dr),
        ("att_l", ("W_c", "U_c", "v_c"), e),
    ] {
        w(&mut ps, &format!("{att}.{wn}"), &[dx, a], dx);
        w(&mut ps, &format!("{att}.{un}"), &[hdim, a], hdim);
        w(&mut ps, &format!("{att}.{vn}"), &[a, 1], a);
    }

    let dc = cfg.context_dim();
    let fan = e + hdim + dc;
    let mut gate = |ps: &mut ParamSet, suffix: &str, bias: f64| {
        w(ps, &format!("lstm.W_{suffix}y"), &[e, hdim], fan);
        w(ps, &format!("lstm.W_{suffix}h"), &[hdim, hdim], fan);
        if dc > 0 {
            w(ps, &format!("lstm.W_{suffix}d"), &[dc, hdim], fan);
        }
        ps.insert(format!("lstm.b_{suffix}"), Tensor::full(&[1, hdim], bias));
    };
    for g in GATES {
        gate(&mut ps, g, if g == "f" { 1.0 } else { 0.0 });
    }
    gate(&mut ps, "c0", 0.0);
    gate(&mut ps, "c1", 0.0);

    w(&mut ps, "init.W_Ic", &[d, hdim], d);
    w(&mut ps, "init.W_Ih", &[d, hdim], d);
    w(&mut ps, "out.W_h", &[hdim, cfg.vocab_size], hdim + dc);
    if dc > 0 {
        w(&mut ps, "out.W_d", &[dc, cfg.vocab_size], hdim + dc);
    }
    w(&mut ps, "embed.E", &[cfg.vocab_size, e], 1);
    Ok(ps)
}

/// Typed handles for a [`ParamSet`] bound on a tape.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub conv: [ConvVars; 3],
    pub relation: RelationVars,
    pub att_f: AttnVars,
    pub att_r: AttnVars,
    pub att_l: AttnVars,
    pub lstm: LstmVars,
    pub w_ic: Var,
    pub w_ih: Var,
    pub output: OutputVars,
    pub embed: Var,
}

impl ModelVars {
    pub fn from_bindings(b: &Bindings, cfg: &ModelConfig) -> Result<Self> {
        let g = |n: &str| b.get(n);
        let has_ctx = cfg.context_dim() > 0;
        let gate = |s: &str| -> Result<GateVars> {
            Ok(GateVars {
                wy: g(&format!("lstm.W_{s}y"))?,
                wh: g(&format!("lstm.W_{s}h"))?,
                wd: if has_ctx { Some(g(&format!("lstm.W_{s}d"))?) } else { None },
                b: g(&format!("lstm.b_{s}"))?,
            })
        };
        let conv = |l: usize| -> Result<ConvVars> {
            Ok(ConvVars {
                kernel: g(&format!("enc.conv{l}.w"))?,
                bias: g(&format!("enc.conv{l}.b"))?,
            })
        };
        let att = |p: &str, w: &str, u: &str, v: &str| -> Result<AttnVars> {
            Ok(AttnVars {
                w: g(&format!("{p}.{w}"))?,
                u: g(&format!("{p}.{u}"))?,
                v: g(&format!("{p}.{v}"))?,
            })
        };
        Ok(Self {
            conv: [conv(1)?, conv(2)?, conv(3)?],
            relation: RelationVars {
                w1a: g("rel.w1a")?,
                w1b: g("rel.w1b")?,
                b1: g("rel.b1")?,
                w2: g("rel.w2")?,
                b2: g("rel.b2")?,
            },
            att_f: att("att_f", "W_a", "U_a", "v_a")?,
            att_r: att("att_r", "W_b", "U_b", "v_b")?,
            att_l: att("att_l", "W_c", "U_c", "v_c")?,
            lstm: LstmVars {
                input: gate("i")?,
                forget: gate("f")?,
                output: gate("o")?,
                cell: [gate("c0")?, gate("c1")?],
            },
            w_ic: g("init.W_Ic")?,
            w_ih: g("init.W_Ih")?,
            output: OutputVars {
                wh: g("out.W_h")?,
                wd: if has_ctx { Some(g("out.W_d")?) } else { None },
                linear_logits: cfg.linear_logits,
            },
            embed: g("embed.E")?,
        })
    }
}

/// Per-image quantities that do not change across decode steps.
#[derive(Debug, Clone, Copy)]
struct Memory {
    feats: Var,
    feat_keys: Option<Var>,
    relations: Option<(Var, Var)>,
    labels: Option<(Var, Var)>,
}

/// Attention weights of one decode step, for inspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepWeights {
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
}

/// A forward pass over one image recorded on a tape.
pub struct Episode<'a> {
    pub tape: Tape,
    pub vars: ModelVars,
    pub bindings: Bindings,
    cfg: &'a ModelConfig,
    mem: Memory,
    init: DecoderState,
    state: DecoderState,
    zero_embed: Var,
    pub weights: Vec<StepWeights>,
    pub record_weights: bool,
}

impl<'a> Episode<'a> {
    pub fn new(model: &'a Captioner, image: &RasterImage, labels: &[String]) -> Result<Self> {
        let cfg = &model.config;
        if image.height != cfg.canvas.height || image.width != cfg.canvas.width {
            return Err(CaptionerError::CanvasMismatch {
                expected: (cfg.canvas.height, cfg.canvas.width),
                got: (image.height, image.width),
            });
        }
        let mut tape = Tape::new();
        let bindings = model.params.bind(&mut tape);
        let vars = ModelVars::from_bindings(&bindings, cfg)?;
        let feats = encode(&mut tape, image, &vars.conv)?;
        let attn = cfg.attention;
        let feat_keys = if attn.feature {
            Some(attention_keys(&mut tape, feats, &vars.att_f)?)
        } else {
            None
        };
        let relations = if attn.relation {
            let r = build_relation_maps(&mut tape, feats, &vars.relation)?;
            Some((r, attention_keys(&mut tape, r, &vars.att_r)?))
        } else {
            None
        };
        let labels = if attn.label {
            let l = build_label_maps(&mut tape, labels, &model.vocab, vars.embed)?;
            Some((l, attention_keys(&mut tape, l, &vars.att_l)?))
        } else {
            None
        };
        let state = init_state(&mut tape, feats, vars.w_ic, vars.w_ih)?;
        let zero_embed = tape.constant(Tensor::zeros(&[1, cfg.embed_dim]));
        Ok(Self {
            tape,
            vars,
            bindings,
            cfg,
            mem: Memory {
                feats,
                feat_keys,
                relations,
                labels,
            },
            init: state,
            state,
            zero_embed,
            weights: Vec::new(),
            record_weights: false,
        })
    }

    pub fn state(&self) -> DecoderState {
        self.state
    }

    /// Rewinds the decoder to its initial state; per-image work already on
    /// the tape is reused.
    pub fn restart(&mut self) {
        self.state = self.init;
        self.weights.clear();
    }

    /// Runs the decoder until EOS or `max_len` tokens, choosing each token
    /// from the step's log-distribution. With `record`, also returns the
    /// summed log-probability of the chosen tokens as a tape scalar.
    pub fn decode(
        &mut self,
        max_len: usize,
        mut choose: impl FnMut(&[f64]) -> usize,
        record: bool,
    ) -> Result<(Decoded, Option<Var>)> {
        let mut out = Decoded {
            tokens: Vec::new(),
            log_probs: Vec::new(),
        };
        let mut picks = Vec::new();
        let mut prev = None;
        for _ in 0..max_len.max(1) {
            let logp = self.step(prev)?;
            let row = self.tape.value(logp).data();
            let tok = choose(row);
            out.tokens.push(tok);
            out.log_probs.push(row[tok]);
            if record {
                picks.push(self.tape.slice(logp, 1, tok, 1)?);
            }
            if tok == EOS {
                break;
            }
            prev = Some(tok);
        }
        let total = if record {
            let all = self.tape.concat(&picks, 1)?;
            Some(self.tape.sum(all))
        } else {
            None
        };
        Ok((out, total))
    }

    /// Context from the previous hidden state, advance the LSTM on the
    /// previous token (`None` at the first step), and return the
    /// log-distribution over the next token, `[1, V]`.
    pub fn step(&mut self, prev_token: Option<usize>) -> Result<Var> {
        let tape = &mut self.tape;
        let h_prev = self.state.h;
        let v = &self.vars;
        let mut sw = StepWeights::default();
        let cf = match self.mem.feat_keys {
            Some(keys) => {
                let a = attend(tape, h_prev, self.mem.feats, keys, &v.att_f)?;
                sw.alpha = Some(tape.value(a.weights).data().to_vec());
                Some(a.context)
            }
            None => None,
        };
        let cr = match self.mem.relations {
            Some((r, keys)) => {
                let a = attend(tape, h_prev, r, keys, &v.att_r)?;
                sw.beta = Some(tape.value(a.weights).data().to_vec());
                Some(a.context)
            }
            None => None,
        };
        let cl = match self.mem.labels {
            Some((l, keys)) => {
                let a = attend(tape, h_prev, l, keys, &v.att_l)?;
                sw.gamma = Some(tape.value(a.weights).data().to_vec());
                Some(a.context)
            }
            None => None,
        };
        let d = if self.cfg.attention.any() {
            Some(make_context(tape, cf, cr, cl)?)
        } else {
            None
        };
        let e = match prev_token {
            Some(t) => tape.gather_rows(v.embed, &[t])?,
            None => self.zero_embed,
        };
        self.state = lstm_step(tape, e, &self.state, d, &v.lstm)?;
        if self.record_weights {
            self.weights.push(sw);
        }
        predict_log(tape, self.state.h, d, &v.output)
    }

    /// Sum of teacher-forced log-probabilities of `targets` (which should
    /// end with EOS), recorded on the tape as a `[1]` scalar.
    pub fn sequence_log_prob(&mut self, targets: &[usize]) -> Result<Var> {
        if targets.is_empty() {
            return Err(CaptionerError::EmptySequence);
        }
        let mut picks = Vec::with_capacity(targets.len());
        let mut prev = None;
        for &t in targets {
            let logp = self.step(prev)?;
            picks.push(self.tape.slice(logp, 1, t, 1)?);
            prev = Some(t);
        }
        let all = self.tape.concat(&picks, 1)?;
        Ok(self.tape.sum(all))
    }
}

/// Trained model: configuration, vocabulary and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Captioner {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamSet,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    vocab: Vocabulary,
}

/// A decoded sequence. `tokens` excludes BOS and includes a final EOS when
/// one was emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub log_probs: Vec<f64>,
}

impl Captioner {
    pub fn new(mut config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        config.vocab_size = vocab.len();
        let params = init_params(&config, seed)?;
        Ok(Self { config, vocab, params })
    }

    pub fn episode(&self, image: &RasterImage, labels: &[String]) -> Result<Episode<'_>> {
        Episode::new(self, image, labels)
    }

    fn decode_with(
        &self,
        image: &RasterImage,
        labels: &[String],
        max_len: usize,
        choose: impl FnMut(&[f64]) -> usize,
    ) -> Result<Decoded> {
        let mut ep = self.episode(image, labels)?;
        Ok(ep.decode(max_len, choose, false)?.0)
    }

    /// Argmax decoding; ties resolve to the lowest token id.
    pub fn decode_greedy(&self, image: &RasterImage, labels: &[String], max_len: usize) -> Result<Decoded> {
        self.decode_with(image, labels, max_len, argmax)
    }

    /// Multinomial sampling from the predicted distribution, deterministic in `seed`.
    pub fn decode_sample(&self, image: &RasterImage, labels: &[String], max_len: usize, seed: u64) -> Result<Decoded> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.decode_with(image, labels, max_len, |row| sample_from_log_probs(row, &mut rng))
    }

    /// Detokenized caption text.
    pub fn caption(&self, image: &RasterImage, labels: &[String], max_len: usize) -> Result<String> {
        Ok(self.vocab.decode(&self.decode_greedy(image, labels, max_len)?.tokens))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = serde_json::to_value(CheckpointMeta {
            model: self.config.clone(),
            vocab: self.vocab.clone(),
        })
        .map_err(|e| CaptionerError::Checkpoint(e.to_string()))?;
        save_checkpoint(dir, &meta, &self.params).map_err(CaptionerError::from)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (manifest, params) = load_checkpoint(dir)?;
        let meta: CheckpointMeta =
            serde_json::from_value(manifest.meta).map_err(|e| CaptionerError::Checkpoint(e.to_string()))?;
        if meta.model.vocab_size != meta.vocab.len() {
            return Err(CaptionerError::Checkpoint(
                "vocabulary size disagrees with the model config".into(),
            ));
        }
        let expected = init_params(&meta.model, 0)?;
        for (name, t) in expected.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(CaptionerError::Checkpoint(format!("parameter {name} missing or misshapen"))),
            }
        }
        if expected.len() != params.len() {
            return Err(CaptionerError::Checkpoint("unexpected extra parameters".into()));
        }
        Ok(Self {
            config: meta.model,
            vocab: meta.vocab,
            params,
        })
    }

    pub fn attention(&self) -> AttnSet {
        self.config.attention
    }
}

/// Multinomial draw from a row of log-probabilities.
pub fn sample_from_log_probs<R: rand::Rng>(row: &[f64], rng: &mut R) -> usize {
    let probs: Vec<f64> = row.iter().map(|l| l.exp()).collect();
    WeightedIndex::new(&probs).expect("probabilities are positive").sample(rng)
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}
