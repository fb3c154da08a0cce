//! Reverse-mode tape over rank-2 tensors.
//!
//! Every value recorded on a [`Graph`] is a matrix (vectors are `1 x n` or
//! `n x 1`, scalars are `1 x 1`). Nodes are appended in evaluation order, so
//! the node list is already a topological order and the backward pass simply
//! walks it in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::error::{Error, Result};

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-9;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { src: Var, start: usize },
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax { src: Var, axis: usize },
    LayerNorm {
        src: Var,
        gain: Var,
        bias: Var,
        axis: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout { src: Var, factors: Vec<f64> },
    Embedding { table: Var, indices: Vec<usize> },
    Sum { src: Var, axis: Option<usize> },
    Mean { src: Var, axis: Option<usize> },
    SquaredError {
        pred: Var,
        target: Vec<f64>,
        weight: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Lane layout of a matrix along an axis: `count` lanes of `len` entries,
/// lane `l` entry `i` lives at `start(l) + i * stride`.
#[derive(Clone, Copy)]
struct Lanes {
    count: usize,
    len: usize,
    rows: usize,
    cols: usize,
    axis: usize,
}

impl Lanes {
    fn new(rows: usize, cols: usize, axis: usize) -> Self {
        if axis == 1 {
            Self { count: rows, len: cols, rows, cols, axis }
        } else {
            Self { count: cols, len: rows, rows, cols, axis }
        }
    }

    #[inline]
    fn at(&self, lane: usize, i: usize) -> usize {
        if self.axis == 1 {
            lane * self.cols + i
        } else {
            i * self.cols + lane
        }
    }

    fn reduced_shape(&self) -> Vec<usize> {
        if self.axis == 1 {
            vec![self.rows, 1]
        } else {
            vec![1, self.cols]
        }
    }
}

/// Recording tape. One graph per forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn dims(t: &Tensor) -> (usize, usize) {
    t.dims2()
}

fn check_axis(op: &'static str, axis: usize, shape: &[usize]) -> Result<()> {
    if axis > 1 {
        return Err(Error::Contract(format!(
            "{op}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn as_matrix(t: Tensor) -> Tensor {
        if t.rank() == 2 {
            t
        } else {
            let (r, c) = t.dims2();
            Tensor::matrix(r, c, t.into_data())
        }
    }

    /// Trainable leaf; receives a gradient on [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(Self::as_matrix(value), Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Self::as_matrix(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = dims(self.value(a));
        let (k2, m) = dims(self.value(b));
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; n * m];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(n, m, out), Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let (r, c) = dims(self.value(a));
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::matrix(r, c, out), Op::Add(a, b), ng))
    }

    /// `a + 1 * row`, broadcasting a `1 x c` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        let (rr, rc) = dims(self.value(row));
        if rr != 1 || rc != c {
            return Err(Error::Shape {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let bias = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(c) {
            for (o, b) in chunk.iter_mut().zip(bias) {
                *o += b;
            }
        }
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(Tensor::matrix(r, c, out), Op::AddRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = dims(self.value(a));
        let out = self.value(a).data().iter().map(|x| x * s).collect();
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, c, out), Op::Scale(a, s), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        check_axis("concat", axis, self.shape(parts[0]))?;
        let (r0, c0) = dims(self.value(parts[0]));
        for &p in &parts[1..] {
            let (r, c) = dims(self.value(p));
            let ok = if axis == 1 { r == r0 } else { c == c0 };
            if !ok {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let value = if axis == 0 {
            let rows: usize = parts.iter().map(|&p| dims(self.value(p)).0).sum();
            let mut out = Vec::with_capacity(rows * c0);
            for &p in parts {
                out.extend_from_slice(self.value(p).data());
            }
            Tensor::matrix(rows, c0, out)
        } else {
            let cols: usize = parts.iter().map(|&p| dims(self.value(p)).1).sum();
            let mut out = Vec::with_capacity(r0 * cols);
            for i in 0..r0 {
                for &p in parts {
                    out.extend_from_slice(self.value(p).row_slice(i));
                }
            }
            Tensor::matrix(r0, cols, out)
        };
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            ng,
        ))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        if start >= end || end > c {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: self.shape(a).to_vec(),
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(r, w, out), Op::SliceCols { src: a, start }, ng))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let (r, c) = dims(self.value(a));
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.ng(a);
        self.push(Tensor::matrix(c, r, out), Op::Transpose(a), ng)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = dims(self.value(a));
        let out = self.value(a).data().iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(Tensor::matrix(r, c, out), op, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Softmax along `axis` after adding `mask` (same shape, `0` or `-inf`).
    pub fn softmax(&mut self, a: Var, axis: usize, mask: Option<&Tensor>) -> Result<Var> {
        check_axis("softmax", axis, self.shape(a))?;
        let (r, c) = dims(self.value(a));
        if let Some(m) = mask {
            if m.dims2() != (r, c) {
                return Err(Error::Shape {
                    op: "softmax",
                    lhs: self.shape(a).to_vec(),
                    rhs: m.shape().to_vec(),
                });
            }
        }
        let lanes = Lanes::new(r, c, axis);
        let x = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for l in 0..lanes.count {
            let mut max = f64::NEG_INFINITY;
            for i in 0..lanes.len {
                let idx = lanes.at(l, i);
                let z = x[idx] + mask.map_or(0.0, |m| m.data()[idx]);
                out[idx] = z;
                if z > max {
                    max = z;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::Contract(format!(
                    "softmax: lane {l} is fully masked"
                )));
            }
            let mut sum = 0.0;
            for i in 0..lanes.len {
                let idx = lanes.at(l, i);
                let e = (out[idx] - max).exp();
                out[idx] = e;
                sum += e;
            }
            for i in 0..lanes.len {
                out[lanes.at(l, i)] /= sum;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(r, c, out), Op::Softmax { src: a, axis }, ng))
    }

    /// Layer normalization along `axis` with learnable `gain` and `bias`
    /// (each holding one entry per lane position).
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, axis: usize) -> Result<Var> {
        check_axis("layer_norm", axis, self.shape(a))?;
        let (r, c) = dims(self.value(a));
        let lanes = Lanes::new(r, c, axis);
        for p in [gain, bias] {
            if self.value(p).len() != lanes.len {
                return Err(Error::Shape {
                    op: "layer_norm",
                    lhs: self.shape(a).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let x = self.value(a).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![0.0; r * c];
        let mut out = vec![0.0; r * c];
        let mut inv_std = vec![0.0; lanes.count];
        let len = lanes.len as f64;
        for l in 0..lanes.count {
            let mean = (0..lanes.len).map(|i| x[lanes.at(l, i)]).sum::<f64>() / len;
            let var = (0..lanes.len)
                .map(|i| {
                    let d = x[lanes.at(l, i)] - mean;
                    d * d
                })
                .sum::<f64>()
                / len;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[l] = is;
            for i in 0..lanes.len {
                let idx = lanes.at(l, i);
                let h = (x[idx] - mean) * is;
                xhat[idx] = h;
                out[idx] = h * g[i] + b[i];
            }
        }
        let ng = self.ng(a) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            Tensor::matrix(r, c, out),
            Op::LayerNorm {
                src: a,
                gain,
                bias,
                axis,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Inverted dropout. Identity (no node recorded) outside training or at `p = 0`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let (r, c) = dims(self.value(a));
        let factors: Vec<f64> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(&factors)
            .map(|(x, f)| x * f)
            .collect();
        let ng = self.ng(a);
        Ok(self.push(Tensor::matrix(r, c, out), Op::Dropout { src: a, factors }, ng))
    }

    /// Rows of `table` selected by `indices`.
    pub fn embedding(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let (v, d) = dims(self.value(table));
        if indices.is_empty() {
            return Err(Error::Contract("embedding lookup with no indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::Contract(format!(
                "embedding index {bad} out of range for table of {v} rows"
            )));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(t.row_slice(i));
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor::matrix(indices.len(), d, out),
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            ng,
        ))
    }

    fn reduce(&mut self, a: Var, axis: Option<usize>, mean: bool) -> Result<Var> {
        let (r, c) = dims(self.value(a));
        let x = self.value(a).data();
        let value = match axis {
            None => {
                let s: f64 = x.iter().sum();
                Tensor::scalar(if mean { s / (r * c) as f64 } else { s })
            }
            Some(ax) => {
                check_axis(if mean { "mean" } else { "sum" }, ax, self.shape(a))?;
                let lanes = Lanes::new(r, c, ax);
                let out: Vec<f64> = (0..lanes.count)
                    .map(|l| {
                        let s: f64 = (0..lanes.len).map(|i| x[lanes.at(l, i)]).sum();
                        if mean {
                            s / lanes.len as f64
                        } else {
                            s
                        }
                    })
                    .collect();
                let shape = lanes.reduced_shape();
                Tensor::matrix(shape[0], shape[1], out)
            }
        };
        let ng = self.ng(a);
        let op = if mean {
            Op::Mean { src: a, axis }
        } else {
            Op::Sum { src: a, axis }
        };
        Ok(self.push(value, op, ng))
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(a, axis, true)
    }

    /// Scalar `sum_i weight_i * (pred_i - target_i)^2`.
    pub fn squared_error(&mut self, pred: Var, target: &Tensor, weight: &Tensor) -> Result<Var> {
        let n = self.value(pred).len();
        if target.len() != n || weight.len() != n {
            return Err(Error::Shape {
                op: "squared_error",
                lhs: self.shape(pred).to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let p = self.value(pred).data();
        let s: f64 = p
            .iter()
            .zip(target.data())
            .zip(weight.data())
            .map(|((p, t), w)| w * (p - t) * (p - t))
            .sum();
        let ng = self.ng(pred);
        Ok(self.push(
            Tensor::scalar(s),
            Op::SquaredError {
                pred,
                target: target.data().to_vec(),
                weight: weight.data().to_vec(),
            },
            ng,
        ))
    }

    /// Populates gradients of the scalar `loss` with respect to every node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(grad) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &grad);
            self.grads[i] = Some(grad);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Ops are moved out temporarily so parent values can be borrowed.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        match &op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (n, k) = dims(value(nodes, a));
                let (_, m) = dims(value(nodes, b));
                if nodes[a.0].needs_grad {
                    let bv = nodes[b.0].value.data();
                    acc(nodes, grads, a, |ga| gemm_nt_acc(g, bv, ga, n, m, k));
                }
                if nodes[b.0].needs_grad {
                    let av = nodes[a.0].value.data();
                    acc(nodes, grads, b, |gb| gemm_tn_acc(av, g, gb, n, k, m));
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    acc(nodes, grads, v, |gv| gv.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                }
            }
            &Op::AddRow(a, row) => {
                acc(nodes, grads, a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let c = value(nodes, row).len();
                acc(nodes, grads, row, |gr| {
                    for chunk in g.chunks(c) {
                        gr.iter_mut().zip(chunk).for_each(|(x, y)| *x += y);
                    }
                });
            }
            &Op::Scale(a, s) => {
                acc(nodes, grads, a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += s * y));
            }
            Op::Concat { parts, axis } => {
                let (rows, cols) = dims(&nodes[i].value);
                let mut offset = 0;
                for &p in parts {
                    let (pr, pc) = dims(value(nodes, p));
                    if *axis == 0 {
                        let start = offset * cols;
                        acc(nodes, grads, p, |gp| {
                            gp.iter_mut()
                                .zip(&g[start..start + pr * pc])
                                .for_each(|(x, y)| *x += y)
                        });
                        offset += pr;
                    } else {
                        let off = offset;
                        acc(nodes, grads, p, |gp| {
                            for r in 0..rows {
                                for c in 0..pc {
                                    gp[r * pc + c] += g[r * cols + off + c];
                                }
                            }
                        });
                        offset += pc;
                    }
                }
            }
            &Op::SliceCols { src, start } => {
                let (r, c) = dims(value(nodes, src));
                let w = nodes[i].value.dims2().1;
                acc(nodes, grads, src, |gs| {
                    for row in 0..r {
                        for j in 0..w {
                            gs[row * c + start + j] += g[row * w + j];
                        }
                    }
                });
            }
            &Op::Transpose(a) => {
                let (r, c) = dims(value(nodes, a));
                acc(nodes, grads, a, |ga| {
                    for row in 0..r {
                        for col in 0..c {
                            ga[row * c + col] += g[col * r + row];
                        }
                    }
                });
            }
            &Op::Tanh(a) => {
                let y = nodes[i].value.data();
                acc(nodes, grads, a, |ga| {
                    for ((x, gy), yv) in ga.iter_mut().zip(g).zip(y) {
                        *x += gy * (1.0 - yv * yv);
                    }
                });
            }
            &Op::Sigmoid(a) => {
                let y = nodes[i].value.data();
                acc(nodes, grads, a, |ga| {
                    for ((x, gy), yv) in ga.iter_mut().zip(g).zip(y) {
                        *x += gy * yv * (1.0 - yv);
                    }
                });
            }
            &Op::Relu(a) => {
                let xin = nodes[a.0].value.data();
                acc(nodes, grads, a, |ga| {
                    for ((x, gy), xv) in ga.iter_mut().zip(g).zip(xin) {
                        if *xv > 0.0 {
                            *x += gy;
                        }
                    }
                });
            }
            &Op::Softmax { src, axis } => {
                let (r, c) = dims(&nodes[i].value);
                let lanes = Lanes::new(r, c, axis);
                let y = nodes[i].value.data();
                acc(nodes, grads, src, |gs| {
                    for l in 0..lanes.count {
                        let dot: f64 = (0..lanes.len)
                            .map(|k| {
                                let idx = lanes.at(l, k);
                                g[idx] * y[idx]
                            })
                            .sum();
                        for k in 0..lanes.len {
                            let idx = lanes.at(l, k);
                            gs[idx] += y[idx] * (g[idx] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                src,
                gain,
                bias,
                axis,
                xhat,
                inv_std,
            } => {
                let (r, c) = dims(&nodes[i].value);
                let lanes = Lanes::new(r, c, *axis);
                let gv = nodes[gain.0].value.data();
                acc(nodes, grads, *gain, |gg| {
                    for l in 0..lanes.count {
                        for k in 0..lanes.len {
                            let idx = lanes.at(l, k);
                            gg[k] += g[idx] * xhat[idx];
                        }
                    }
                });
                acc(nodes, grads, *bias, |gb| {
                    for l in 0..lanes.count {
                        for k in 0..lanes.len {
                            gb[k] += g[lanes.at(l, k)];
                        }
                    }
                });
                let len = lanes.len as f64;
                acc(nodes, grads, *src, |gs| {
                    for l in 0..lanes.count {
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for k in 0..lanes.len {
                            let idx = lanes.at(l, k);
                            let d = g[idx] * gv[k];
                            mean_d += d;
                            mean_dx += d * xhat[idx];
                        }
                        mean_d /= len;
                        mean_dx /= len;
                        for k in 0..lanes.len {
                            let idx = lanes.at(l, k);
                            let d = g[idx] * gv[k];
                            gs[idx] += inv_std[l] * (d - mean_d - xhat[idx] * mean_dx);
                        }
                    }
                });
            }
            Op::Dropout { src, factors } => {
                acc(nodes, grads, *src, |gs| {
                    for ((x, gy), f) in gs.iter_mut().zip(g).zip(factors) {
                        *x += gy * f;
                    }
                });
            }
            Op::Embedding { table, indices } => {
                let d = nodes[table.0].value.dims2().1;
                acc(nodes, grads, *table, |gt| {
                    for (row, &ix) in indices.iter().enumerate() {
                        for j in 0..d {
                            gt[ix * d + j] += g[row * d + j];
                        }
                    }
                });
            }
            &Op::Sum { src, axis } | &Op::Mean { src, axis } => {
                let is_mean = matches!(op, Op::Mean { .. });
                let (r, c) = dims(value(nodes, src));
                match axis {
                    None => {
                        let s = if is_mean { g[0] / (r * c) as f64 } else { g[0] };
                        acc(nodes, grads, src, |gs| gs.iter_mut().for_each(|x| *x += s));
                    }
                    Some(ax) => {
                        let lanes = Lanes::new(r, c, ax);
                        let norm = if is_mean { lanes.len as f64 } else { 1.0 };
                        acc(nodes, grads, src, |gs| {
                            for l in 0..lanes.count {
                                for k in 0..lanes.len {
                                    gs[lanes.at(l, k)] += g[l] / norm;
                                }
                            }
                        });
                    }
                }
            }
            Op::SquaredError {
                pred,
                target,
                weight,
            } => {
                let p = nodes[pred.0].value.data();
                acc(nodes, grads, *pred, |gp| {
                    for k in 0..p.len() {
                        gp[k] += g[0] * 2.0 * weight[k] * (p[k] - target[k]);
                    }
                });
            }
        }
        self.nodes[i].op = op;
    }

    /// Gradient of the last backward pass; zeros when `v` was unreachable.
    pub fn grad(&self, v: Var) -> Tensor {
        let value = &self.nodes[v.0].value;
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => Tensor::new(value.shape().to_vec(), g.clone())
                .expect("gradient shape matches value"),
            None => Tensor::zeros(value.shape()),
        }
    }
}

fn value(nodes: &[Node], v: Var) -> &Tensor {
    &nodes[v.0].value
}

fn acc(nodes: &[Node], grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
    if !nodes[v.0].needs_grad {
        return;
    }
    let n = nodes[v.0].value.len();
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
    f(slot);
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
