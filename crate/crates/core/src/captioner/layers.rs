//! The model's building blocks as tape operations. Each function takes
//! its parameters as tape variables, so every block can be checked
//! against finite differences in isolation.

use super::CaptionerError;
use crate::captiongen::{tokenize, Vocabulary};
use crate::figgen::RasterImage;
use crate::ndgrad::{Tape, Tensor, Var};

type Result<T> = std::result::Result<T, CaptionerError>;

/// Pixel bytes scaled to `[0, 1]`, laid out `[3, h, w]`.
pub fn image_tensor(image: &RasterImage) -> Tensor {
    let (h, w) = (image.height as usize, image.width as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (p, px) in image.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + p] = px[c] as f64 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).expect("image dims are positive")
}

#[derive(Debug, Clone, Copy)]
pub struct ConvVars {
    pub kernel: Var,
    pub bias: Var,
}

/// Three stride-2 conv + relu layers; returns `F` as `[m, d]`.
pub fn encode_tensor(tape: &mut Tape, input: Var, layers: &[ConvVars; 3]) -> Result<Var> {
    let mut x = input;
    for l in layers {
        let y = tape.conv2d(x, l.kernel, l.bias, 2)?;
        x = tape.relu(y);
    }
    let (d, gh, gw) = match tape.shape(x) {
        &[d, gh, gw] => (d, gh, gw),
        _ => unreachable!("conv2d output is rank 3"),
    };
    let flat = tape.reshape(x, &[d, gh * gw])?;
    Ok(tape.transpose(flat)?)
}

pub fn encode(tape: &mut Tape, image: &RasterImage, layers: &[ConvVars; 3]) -> Result<Var> {
    let input = tape.constant(image_tensor(image));
    encode_tensor(tape, input, layers)
}

#[derive(Debug, Clone, Copy)]
pub struct RelationVars {
    /// Rows of the first layer acting on `f_i`.
    pub w1a: Var,
    /// Rows of the first layer acting on `f_j`.
    pub w1b: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// `r_ij = W2 relu(W1 [f_i; f_j] + b1) + b2` for every ordered pair,
/// row `i·m + j` of the `[m², d̂]` result. The first layer is split so the
/// per-position products are computed once.
pub fn build_relation_maps(tape: &mut Tape, feats: Var, p: &RelationVars) -> Result<Var> {
    let m = tape.shape(feats)[0];
    let a = tape.matmul(feats, p.w1a)?;
    let b = tape.matmul(feats, p.w1b)?;
    let ii: Vec<usize> = (0..m * m).map(|k| k / m).collect();
    let jj: Vec<usize> = (0..m * m).map(|k| k % m).collect();
    let ai = tape.gather_rows(a, &ii)?;
    let bj = tape.gather_rows(b, &jj)?;
    let pre = tape.add(ai, bj)?;
    let pre = tape.add_row(pre, p.b1)?;
    let hidden = tape.relu(pre);
    let out = tape.matmul(hidden, p.w2)?;
    Ok(tape.add_row(out, p.b2)?)
}

/// Embedding-row ids of a label's words.
pub fn label_token_ids(label: &str, vocab: &Vocabulary) -> Vec<usize> {
    tokenize(label).iter().map(|t| vocab.id(t)).collect()
}

/// One row per label: the mean embedding of its words.
pub fn build_label_maps(tape: &mut Tape, labels: &[String], vocab: &Vocabulary, embed: Var) -> Result<Var> {
    if labels.is_empty() {
        return Err(CaptionerError::NoLabels);
    }
    let mut rows = Vec::with_capacity(labels.len());
    for l in labels {
        let ids = label_token_ids(l, vocab);
        if ids.is_empty() {
            return Err(CaptionerError::InvalidLabel(l.clone()));
        }
        let words = tape.gather_rows(embed, &ids)?;
        rows.push(if ids.len() == 1 { words } else { tape.mean_pool_all(words)? });
    }
    Ok(if rows.len() == 1 { rows[0] } else { tape.concat(&rows, 0)? })
}

#[derive(Debug, Clone, Copy)]
pub struct AttnVars {
    /// Projection of the attended vectors, `[dx, a]`.
    pub w: Var,
    /// Projection of the previous hidden state, `[hidden, a]`.
    pub u: Var,
    /// Scoring vector, `[a, 1]`.
    pub v: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct Attended {
    /// `[1, n]`, nonnegative, sums to one.
    pub weights: Var,
    /// `[1, dx]`.
    pub context: Var,
}

/// `X W`, which does not depend on the decoder state and is computed once
/// per image.
pub fn attention_keys(tape: &mut Tape, values: Var, p: &AttnVars) -> Result<Var> {
    Ok(tape.matmul(values, p.w)?)
}

/// `e_j = vᵀ tanh(W x_j + U h)`, weights `softmax(e)`, context `Σ_j w_j x_j`.
pub fn attend(tape: &mut Tape, h_prev: Var, values: Var, keys: Var, p: &AttnVars) -> Result<Attended> {
    let q = tape.matmul(h_prev, p.u)?;
    let s = tape.add_row(keys, q)?;
    let s = tape.tanh(s);
    let e = tape.matmul(s, p.v)?;
    let e = tape.transpose(e)?;
    let weights = tape.softmax(e, 1)?;
    let context = tape.matmul(weights, values)?;
    Ok(Attended { weights, context })
}

fn attend_fresh(tape: &mut Tape, h_prev: Var, values: Var, p: &AttnVars) -> Result<Attended> {
    let keys = attention_keys(tape, values, p)?;
    attend(tape, h_prev, values, keys, p)
}

/// Attention over feature maps.
pub fn att_f(tape: &mut Tape, h_prev: Var, feats: Var, p: &AttnVars) -> Result<Attended> {
    attend_fresh(tape, h_prev, feats, p)
}

/// Attention over relation maps.
pub fn att_r(tape: &mut Tape, h_prev: Var, relations: Var, p: &AttnVars) -> Result<Attended> {
    attend_fresh(tape, h_prev, relations, p)
}

/// Attention over label maps.
pub fn att_l(tape: &mut Tape, h_prev: Var, labels: Var, p: &AttnVars) -> Result<Attended> {
    attend_fresh(tape, h_prev, labels, p)
}

/// Concatenates the available contexts in the fixed order F, R, L.
pub fn make_context(tape: &mut Tape, feature: Option<Var>, relation: Option<Var>, label: Option<Var>) -> Result<Var> {
    let parts: Vec<Var> = [feature, relation, label].into_iter().flatten().collect();
    match parts.len() {
        0 => Err(CaptionerError::NoAttentionEnabled),
        1 => Ok(parts[0]),
        _ => Ok(tape.concat(&parts, 1)?),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h: Var,
    pub cell: Var,
    pub t: usize,
}

/// `c_0 = σ(F̄ W_Ic)`, `h_0 = σ(F̄ W_Ih)` with `F̄` the mean feature vector.
pub fn init_state(tape: &mut Tape, feats: Var, w_ic: Var, w_ih: Var) -> Result<DecoderState> {
    let mean = tape.mean_pool_all(feats)?;
    let c = tape.matmul(mean, w_ic)?;
    let h = tape.matmul(mean, w_ih)?;
    Ok(DecoderState {
        cell: tape.sigmoid(c),
        h: tape.sigmoid(h),
        t: 0,
    })
}

/// Weights of one gate pre-activation `e W_y + h W_h + d W_d + b`.
#[derive(Debug, Clone, Copy)]
pub struct GateVars {
    pub wy: Var,
    pub wh: Var,
    /// Absent when the decoder has no context.
    pub wd: Option<Var>,
    pub b: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub input: GateVars,
    pub forget: GateVars,
    pub output: GateVars,
    /// The two maxout pieces of the cell candidate.
    pub cell: [GateVars; 2],
}

fn gate_pre(tape: &mut Tape, e: Var, h: Var, d: Option<Var>, g: &GateVars) -> Result<Var> {
    let mut terms = vec![tape.matmul(e, g.wy)?, tape.matmul(h, g.wh)?];
    match (d, g.wd) {
        (Some(d), Some(wd)) => terms.push(tape.matmul(d, wd)?),
        (None, None) => {}
        _ => return Err(CaptionerError::InvalidConfig("context and W_d presence disagree".into())),
    }
    terms.push(g.b);
    Ok(tape.add_all(&terms)?)
}

/// One decoder step with sigmoid gates and a 2-piece maxout cell candidate.
pub fn lstm_step(tape: &mut Tape, e: Var, state: &DecoderState, d: Option<Var>, p: &LstmVars) -> Result<DecoderState> {
    let i = gate_pre(tape, e, state.h, d, &p.input)?;
    let i = tape.sigmoid(i);
    let f = gate_pre(tape, e, state.h, d, &p.forget)?;
    let f = tape.sigmoid(f);
    let o = gate_pre(tape, e, state.h, d, &p.output)?;
    let o = tape.sigmoid(o);
    let c1 = gate_pre(tape, e, state.h, d, &p.cell[0])?;
    let c2 = gate_pre(tape, e, state.h, d, &p.cell[1])?;
    let cand = tape.maxout(c1, c2)?;
    let new_in = tape.mul(i, cand)?;
    let kept = tape.mul(f, state.cell)?;
    let cell = tape.add(new_in, kept)?;
    let tc = tape.tanh(cell);
    let h = tape.mul(o, tc)?;
    Ok(DecoderState { h, cell, t: state.t + 1 })
}

#[derive(Debug, Clone, Copy)]
pub struct OutputVars {
    pub wh: Var,
    pub wd: Option<Var>,
    pub linear_logits: bool,
}

fn output_scores(tape: &mut Tape, h: Var, d: Option<Var>, p: &OutputVars) -> Result<Var> {
    let mut y = tape.matmul(h, p.wh)?;
    match (d, p.wd) {
        (Some(d), Some(wd)) => {
            let yd = tape.matmul(d, wd)?;
            y = tape.add(y, yd)?;
        }
        (None, None) => {}
        _ => return Err(CaptionerError::InvalidConfig("context and W_d presence disagree".into())),
    }
    Ok(if p.linear_logits { y } else { tape.sigmoid(y) })
}

/// Next-token distribution `softmax(σ(h W_h + d W_d))`, `[1, V]`.
pub fn predict(tape: &mut Tape, h: Var, d: Option<Var>, p: &OutputVars) -> Result<Var> {
    let y = output_scores(tape, h, d, p)?;
    Ok(tape.softmax(y, 1)?)
}

/// Log of [`predict`], computed stably.
pub fn predict_log(tape: &mut Tape, h: Var, d: Option<Var>, p: &OutputVars) -> Result<Var> {
    let y = output_scores(tape, h, d, p)?;
    Ok(tape.log_softmax(y, 1)?)
}
