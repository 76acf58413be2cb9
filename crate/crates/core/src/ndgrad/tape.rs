//! Append-only gradient tape.
//!
//! Every operation evaluates eagerly and records its inputs. `backward`
//! walks the records in reverse append order, so the append order is the
//! topological order.

use super::tensor::{matmul_a_bt_acc, matmul_at_b_acc, matmul_into};
use super::{GradError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Neg(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Log(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    Concat(Vec<Var>, usize),
    Slice {
        src: Var,
        axis: usize,
        start: usize,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Maxout(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
        pad: usize,
    },
    MeanPool(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. One tape per forward/backward episode.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros when `v` did not influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        self.grads[v.0].take().unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> GradError {
    GradError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Iterate `(offset, stride)` for every 1-D lane of a rank-2 `[rows, cols]`
/// buffer along `axis`.
fn lanes(rows: usize, cols: usize, axis: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    let (count, len, stride, step) = if axis == 1 {
        (rows, cols, 1, cols)
    } else {
        (cols, rows, cols, 1)
    };
    (0..count).map(move |l| (l * step, stride, len))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise maximum of two pre-activation sets (2-piece maxout).
    pub fn maxout(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        self.binary_same("maxout", a, b, f64::max, Op::Maxout(a, b))
    }

    /// `[n, k] + [1, k]`, the row broadcast to every row.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, GradError> {
        let (ta, tr) = (self.value(a), self.value(row));
        let (n, k) = ta.dims2()?;
        if tr.shape() != [1, k] {
            return Err(mismatch("add_row", ta, tr));
        }
        let mut data = ta.data().to_vec();
        for i in 0..n {
            for (x, &r) in data[i * k..(i + 1) * k].iter_mut().zip(tr.data()) {
                *x += r;
            }
        }
        let out = Tensor::new(vec![n, k], data)?;
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Natural log; inputs are expected to be positive.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut data = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut data, m, k, n);
        let out = Tensor::new(vec![m, n], data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, GradError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        let src = ta.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        let out = Tensor::new(vec![c, r], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, GradError> {
        let out = self.value(a).clone().reshaped(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Softmax along `axis` of a rank-2 tensor.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var, GradError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if axis > 1 {
            return Err(GradError::InvalidAxis {
                axis,
                shape: ta.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        for (off, stride, len) in lanes(r, c, axis) {
            let idx = |i: usize| off + i * stride;
            let max = (0..len).map(|i| data[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..len {
                let e = (data[idx(i)] - max).exp();
                data[idx(i)] = e;
                z += e;
            }
            for i in 0..len {
                data[idx(i)] /= z;
            }
        }
        let out = Tensor::new(vec![r, c], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a, axis), rg))
    }

    /// `log(softmax(a))` along `axis`, computed without forming the
    /// probabilities first.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var, GradError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        if axis > 1 {
            return Err(GradError::InvalidAxis {
                axis,
                shape: ta.shape().to_vec(),
            });
        }
        let mut data = ta.data().to_vec();
        for (off, stride, len) in lanes(r, c, axis) {
            let idx = |i: usize| off + i * stride;
            let max = (0..len).map(|i| data[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..len).map(|i| (data[idx(i)] - max).exp()).sum();
            let lse = max + z.ln();
            for i in 0..len {
                data[idx(i)] -= lse;
            }
        }
        let out = Tensor::new(vec![r, c], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSoftmax(a, axis), rg))
    }

    /// Concatenate rank-2 tensors along `axis`.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, GradError> {
        let first = *parts.first().ok_or(GradError::Empty("concat"))?;
        let (r0, c0) = self.value(first).dims2()?;
        if axis > 1 {
            return Err(GradError::InvalidAxis {
                axis,
                shape: vec![r0, c0],
            });
        }
        let mut rows = 0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if (axis == 0 && c != c0) || (axis == 1 && r != r0) {
                return Err(mismatch("concat", self.value(first), self.value(p)));
            }
            rows += r;
            cols += c;
        }
        let (rows, cols) = if axis == 0 { (rows, c0) } else { (r0, cols) };
        let mut data = Vec::with_capacity(rows * cols);
        if axis == 0 {
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
        } else {
            for i in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(i));
                }
            }
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// `len` rows (`axis = 0`) or columns (`axis = 1`) starting at `start`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, GradError> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || len == 0 || start + len > extent {
            return Err(GradError::InvalidSlice {
                axis,
                start,
                len,
                shape: ta.shape().to_vec(),
            });
        }
        let (data, shape) = if axis == 0 {
            (ta.data()[start * c..(start + len) * c].to_vec(), vec![len, c])
        } else {
            let mut d = Vec::with_capacity(r * len);
            for i in 0..r {
                d.extend_from_slice(&ta.row_slice(i)[start..start + len]);
            }
            (d, vec![r, len])
        };
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Slice { src: a, axis, start }, rg))
    }

    /// Rows of `table` selected by `ids`, stacked into `[ids.len(), k]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, GradError> {
        let tt = self.value(table);
        let (v, k) = tt.dims2()?;
        if ids.is_empty() {
            return Err(GradError::Empty("gather_rows"));
        }
        let mut data = Vec::with_capacity(ids.len() * k);
        for &id in ids {
            if id >= v {
                return Err(GradError::IndexOutOfRange { index: id, len: v });
            }
            data.extend_from_slice(tt.row_slice(id));
        }
        let out = Tensor::new(vec![ids.len(), k], data)?;
        let rg = self.rg(table);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// 2-D convolution of `[c, h, w]` by `[o, c, k, k]` plus `[o]` bias, with
    /// zero padding `k / 2` ("same" padding for odd `k`).
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var, GradError> {
        let (tx, tk, tb) = (self.value(input), self.value(kernel), self.value(bias));
        let (c, h, w) = match tx.shape() {
            &[c, h, w] => (c, h, w),
            s => {
                return Err(GradError::RankMismatch {
                    expected: 3,
                    shape: s.to_vec(),
                })
            }
        };
        let (o, kc, kh, kw) = match tk.shape() {
            &[o, kc, kh, kw] => (o, kc, kh, kw),
            s => {
                return Err(GradError::RankMismatch {
                    expected: 4,
                    shape: s.to_vec(),
                })
            }
        };
        if kc != c || kh != kw || kh % 2 == 0 || stride == 0 {
            return Err(mismatch("conv2d", tx, tk));
        }
        if tb.shape() != [o] {
            return Err(mismatch("conv2d bias", tk, tb));
        }
        let k = kh;
        let pad = k / 2;
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (w + 2 * pad - k) / stride + 1;
        let (x, wt, b) = (tx.data(), tk.data(), tb.data());
        let mut out = vec![0.0; o * ho * wo];
        for oc in 0..o {
            let plane = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
            plane.iter_mut().for_each(|v| *v = b[oc]);
            for ic in 0..c {
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((oc * c + ic) * k + ky) * k + kx];
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = &x[(ic * h + iy as usize) * w..(ic * h + iy as usize + 1) * w];
                            let prow = &mut plane[oy * wo..(oy + 1) * wo];
                            for (ox, pv) in prow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *pv += wv * xrow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![o, ho, wo], out)?;
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
                pad,
            },
            rg,
        ))
    }

    /// Mean over all rows (positions) of `[m, d]`, giving `[1, d]`.
    pub fn mean_pool_all(&mut self, a: Var) -> Result<Var, GradError> {
        let ta = self.value(a);
        let (m, d) = ta.dims2()?;
        let mut data = vec![0.0; d];
        for i in 0..m {
            for (acc, &x) in data.iter_mut().zip(ta.row_slice(i)) {
                *acc += x;
            }
        }
        data.iter_mut().for_each(|x| *x /= m as f64);
        let out = Tensor::new(vec![1, d], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::MeanPool(a), rg))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    /// Sum of several tensors of identical shape.
    pub fn add_all(&mut self, parts: &[Var]) -> Result<Var, GradError> {
        let (&first, rest) = parts.split_first().ok_or(GradError::Empty("add_all"))?;
        rest.iter().try_fold(first, |acc, &p| self.add(acc, p))
    }

    /// Reverse sweep from a scalar `loss`. A tape supports one sweep.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, GradError> {
        if self.consumed {
            return Err(GradError::TapeConsumed);
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(GradError::NonScalarLoss(lv.shape().to_vec()));
        }
        self.consumed = true;

        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            backprop(nodes, &mut grads, &node.op, &node.value, &g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        let grads = grads
            .into_iter()
            .zip(nodes)
            .map(|(g, node)| match (g, &node.op) {
                (Some(g), Op::Leaf) => Some(Tensor::new(node.value.shape().to_vec(), g).expect("grad shape")),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads, shapes })
    }
}

/// Accumulate into the gradient buffer of `v`, creating it on first touch.
fn acc<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let len = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
}

fn backprop(nodes: &[Node], grads: &mut [Option<Vec<f64>>], op: &Op, out: &Tensor, g: &[f64]) {
    let val = |v: Var| nodes[v.0].value.data();
    match *op {
        Op::Leaf | Op::Constant => {}
        Op::Add(a, b) => {
            for v in [a, b] {
                if let Some(ga) = acc(nodes, grads, v) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::Sub(a, b) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
            if let Some(gb) = acc(nodes, grads, b) {
                gb.iter_mut().zip(g).for_each(|(x, &y)| *x -= y);
            }
        }
        Op::Mul(a, b) => {
            if let Some(ga) = acc(nodes, grads, a) {
                for ((x, &y), &bv) in ga.iter_mut().zip(g).zip(val(b)) {
                    *x += y * bv;
                }
            }
            if let Some(gb) = acc(nodes, grads, b) {
                for ((x, &y), &av) in gb.iter_mut().zip(g).zip(val(a)) {
                    *x += y * av;
                }
            }
        }
        Op::Maxout(a, b) => {
            let (av, bv) = (val(a), val(b));
            if let Some(ga) = acc(nodes, grads, a) {
                for i in 0..g.len() {
                    if av[i] >= bv[i] {
                        ga[i] += g[i];
                    }
                }
            }
            if let Some(gb) = acc(nodes, grads, b) {
                for i in 0..g.len() {
                    if av[i] < bv[i] {
                        gb[i] += g[i];
                    }
                }
            }
        }
        Op::AddRow(a, row) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
            if let Some(gr) = acc(nodes, grads, row) {
                let k = gr.len();
                for chunk in g.chunks(k) {
                    gr.iter_mut().zip(chunk).for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::Scale(a, c) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += c * y);
            }
        }
        Op::Neg(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x -= y);
            }
        }
        Op::MatMul(a, b) => {
            let (m, k) = nodes[a.0].value.dims2().expect("rank 2");
            let n = out.shape()[1];
            if let Some(ga) = acc(nodes, grads, a) {
                matmul_a_bt_acc(g, val(b), ga, m, n, k);
            }
            if let Some(gb) = acc(nodes, grads, b) {
                matmul_at_b_acc(val(a), g, gb, m, k, n);
            }
        }
        Op::Transpose(a) => {
            let (r, c) = nodes[a.0].value.dims2().expect("rank 2");
            if let Some(ga) = acc(nodes, grads, a) {
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j * r + i];
                    }
                }
            }
        }
        Op::Reshape(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
            }
        }
        Op::Sigmoid(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                for ((x, &y), &s) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * s * (1.0 - s);
                }
            }
        }
        Op::Tanh(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                for ((x, &y), &t) in ga.iter_mut().zip(g).zip(out.data()) {
                    *x += y * (1.0 - t * t);
                }
            }
        }
        Op::Relu(a) => {
            let av = val(a);
            if let Some(ga) = acc(nodes, grads, a) {
                for i in 0..g.len() {
                    if av[i] > 0.0 {
                        ga[i] += g[i];
                    }
                }
            }
        }
        Op::Log(a) => {
            let av = val(a);
            if let Some(ga) = acc(nodes, grads, a) {
                for i in 0..g.len() {
                    ga[i] += g[i] / av[i];
                }
            }
        }
        Op::Softmax(a, axis) => {
            let (r, c) = out.dims2().expect("rank 2");
            let y = out.data();
            if let Some(ga) = acc(nodes, grads, a) {
                for (off, stride, len) in lanes(r, c, axis) {
                    let idx = |i: usize| off + i * stride;
                    let dot: f64 = (0..len).map(|i| g[idx(i)] * y[idx(i)]).sum();
                    for i in 0..len {
                        ga[idx(i)] += y[idx(i)] * (g[idx(i)] - dot);
                    }
                }
            }
        }
        Op::LogSoftmax(a, axis) => {
            let (r, c) = out.dims2().expect("rank 2");
            let y = out.data();
            if let Some(ga) = acc(nodes, grads, a) {
                for (off, stride, len) in lanes(r, c, axis) {
                    let idx = |i: usize| off + i * stride;
                    let gsum: f64 = (0..len).map(|i| g[idx(i)]).sum();
                    for i in 0..len {
                        ga[idx(i)] += g[idx(i)] - y[idx(i)].exp() * gsum;
                    }
                }
            }
        }
        Op::Concat(ref parts, axis) => {
            let cols = out.shape()[1];
            let mut offset = 0;
            for &p in parts {
                let (pr, pc) = nodes[p.0].value.dims2().expect("rank 2");
                if let Some(gp) = acc(nodes, grads, p) {
                    if axis == 0 {
                        let src = &g[offset * cols..(offset + pr) * cols];
                        gp.iter_mut().zip(src).for_each(|(x, &y)| *x += y);
                    } else {
                        for i in 0..pr {
                            let src = &g[i * cols + offset..i * cols + offset + pc];
                            gp[i * pc..(i + 1) * pc].iter_mut().zip(src).for_each(|(x, &y)| *x += y);
                        }
                    }
                }
                offset += if axis == 0 { pr } else { pc };
            }
        }
        Op::Slice { src, axis, start } => {
            let (_, c) = nodes[src.0].value.dims2().expect("rank 2");
            let (or, oc) = out.dims2().expect("rank 2");
            if let Some(gs) = acc(nodes, grads, src) {
                if axis == 0 {
                    gs[start * c..(start + or) * c].iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                } else {
                    for i in 0..or {
                        gs[i * c + start..i * c + start + oc]
                            .iter_mut()
                            .zip(&g[i * oc..(i + 1) * oc])
                            .for_each(|(x, &y)| *x += y);
                    }
                }
            }
        }
        Op::Gather { table, ref ids } => {
            let k = out.shape()[1];
            if let Some(gt) = acc(nodes, grads, table) {
                for (r, &id) in ids.iter().enumerate() {
                    gt[id * k..(id + 1) * k]
                        .iter_mut()
                        .zip(&g[r * k..(r + 1) * k])
                        .for_each(|(x, &y)| *x += y);
                }
            }
        }
        Op::Conv2d {
            input,
            kernel,
            bias,
            stride,
            pad,
        } => {
            let (c, h, w) = match *nodes[input.0].value.shape() {
                [c, h, w] => (c, h, w),
                _ => unreachable!(),
            };
            let ks = nodes[kernel.0].value.shape();
            let (o, k) = (ks[0], ks[2]);
            let (ho, wo) = (out.shape()[1], out.shape()[2]);
            if let Some(gb) = acc(nodes, grads, bias) {
                for oc in 0..o {
                    gb[oc] += g[oc * ho * wo..(oc + 1) * ho * wo].iter().sum::<f64>();
                }
            }
            let x = nodes[input.0].value.data();
            let wt = nodes[kernel.0].value.data();
            let need_x = nodes[input.0].requires_grad;
            let need_w = nodes[kernel.0].requires_grad;
            let mut gx = if need_x { vec![0.0; c * h * w] } else { Vec::new() };
            let mut gw = if need_w { vec![0.0; wt.len()] } else { Vec::new() };
            for oc in 0..o {
                let gplane = &g[oc * ho * wo..(oc + 1) * ho * wo];
                for ic in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let widx = ((oc * c + ic) * k + ky) * k + kx;
                            let wv = wt[widx];
                            let mut wacc = 0.0;
                            for oy in 0..ho {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let row = (ic * h + iy as usize) * w;
                                for ox in 0..wo {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let gv = gplane[oy * wo + ox];
                                    if need_w {
                                        wacc += gv * x[row + ix as usize];
                                    }
                                    if need_x {
                                        gx[row + ix as usize] += gv * wv;
                                    }
                                }
                            }
                            if need_w {
                                gw[widx] += wacc;
                            }
                        }
                    }
                }
            }
            if let Some(gi) = acc(nodes, grads, input) {
                gi.iter_mut().zip(&gx).for_each(|(a, &b)| *a += b);
            }
            if let Some(gk) = acc(nodes, grads, kernel) {
                gk.iter_mut().zip(&gw).for_each(|(a, &b)| *a += b);
            }
        }
        Op::MeanPool(a) => {
            let (m, d) = nodes[a.0].value.dims2().expect("rank 2");
            if let Some(ga) = acc(nodes, grads, a) {
                for i in 0..m {
                    for j in 0..d {
                        ga[i * d + j] += g[j] / m as f64;
                    }
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = acc(nodes, grads, a) {
                ga.iter_mut().for_each(|x| *x += g[0]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.sigmoid(x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 0.25);
    }

    #[test]
    fn log_softmax_agrees_with_log_of_softmax_and_survives_large_logits() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 2], vec![0.3, -1.2, 2.0, 0.1]).unwrap());
        let ls = t.log_softmax(x, 0).unwrap();
        let s = t.softmax(x, 0).unwrap();
        let l = t.log(s);
        for (a, b) in t.value(ls).data().iter().zip(t.value(l).data()) {
            assert!((a - b).abs() < 1e-14);
        }
        let big = t.constant(Tensor::row(&[0.0, 2000.0]));
        let lb = t.log_softmax(big, 1).unwrap();
        assert_eq!(t.value(lb).data(), &[-2000.0, 0.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[1, 3]));
        let y = t.softmax(x, 1).unwrap();
        for &p in t.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_along_rows_and_columns_sums_to_one() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 3.0, -7.0]).unwrap());
        let rows = t.softmax(x, 1).unwrap();
        let cols = t.softmax(x, 0).unwrap();
        let r = t.value(rows);
        assert!((r.data()[..3].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let c = t.value(cols);
        assert!((c.data()[0] + c.data()[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0; 4]);
    }

    #[test]
    fn matmul_sum_gradient_is_ones_times_b_transpose() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let b = t.leaf(Tensor::new(vec![3, 2], vec![0.5, -1.0, 2.0, 0.0, 1.5, 3.0]).unwrap());
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c);
        let g = t.backward(s).unwrap();
        // Row sums of B: [-0.5, 2.0, 4.5].
        assert_eq!(g.wrt(a).data(), &[-0.5, 2.0, 4.5, -0.5, 2.0, 4.5]);
        // Column sums of A broadcast: [5, 7, 9] for each column of B.
        assert_eq!(g.wrt(b).data(), &[5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::ones(&[3]));
        let unused = t.leaf(Tensor::ones(&[2, 2]));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused), Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn backward_errors() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::ones(&[1, 2]));
        assert_eq!(t.backward(x).unwrap_err(), GradError::NonScalarLoss(vec![1, 2]));
        let s = t.sum(x);
        t.backward(s).unwrap();
        assert_eq!(t.backward(s).unwrap_err(), GradError::TapeConsumed);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::ones(&[2, 3]));
        let b = t.leaf(Tensor::ones(&[2, 2]));
        let msg = t.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
        assert!(t.add(a, b).is_err());
    }

    #[test]
    fn conv_output_shape_with_same_padding() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::ones(&[3, 64, 64]));
        let k = t.constant(Tensor::ones(&[16, 3, 3, 3]));
        let b = t.constant(Tensor::zeros(&[16]));
        let y = t.conv2d(x, k, b, 2).unwrap();
        assert_eq!(t.shape(y), &[16, 32, 32]);
        // Interior output sees all 27 taps; the top-left corner loses the padded row and column.
        assert_eq!(t.value(y).data()[32 + 1], 27.0);
        assert_eq!(t.value(y).data()[0], 12.0);
    }

    #[test]
    fn maxout_routes_gradient_to_larger_piece() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(&[1.0, -1.0]));
        let b = t.leaf(Tensor::row(&[0.0, 2.0]));
        let m = t.maxout(a, b).unwrap();
        assert_eq!(t.value(m).data(), &[1.0, 2.0]);
        let s = t.sum(m);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(a).data(), &[1.0, 0.0]);
        assert_eq!(g.wrt(b).data(), &[0.0, 1.0]);
    }
}
