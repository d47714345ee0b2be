//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! Nodes are appended in evaluation order, so the tape itself is a
//! topological order of the computation graph; `backward` walks it once in
//! reverse. Adjoints accumulate additively when a node fans out, and leaves
//! that the loss never touches keep a zero gradient.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// C = A · B
    MatMul(NodeId, NodeId),
    /// C = A · Bᵀ
    MatMulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// x[m×n] + bias[1×n] broadcast over rows
    AddRowBroadcast(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatRows(NodeId, NodeId),
    SliceRows(NodeId, usize),
    MeanRows(NodeId),
    Relu(NodeId),
    /// Mask entries are 0 or 1/(1-rate); applied multiplicatively.
    Dropout(NodeId, Vec<f64>),
    SoftmaxRows(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    },
    /// Σ xᵢ² reduced to a scalar.
    SumSquares(NodeId),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Recorded computation graph plus forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert an owned tensor as a leaf. `trainable` marks it as a gradient
    /// target; constants should pass `false`.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        self.push(value, Op::Leaf, trainable)
    }

    /// Insert a shared tensor as a leaf without copying its data.
    pub fn leaf_shared(&mut self, value: Arc<Tensor>, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2()?;
        let (kb, n) = self.value(b).dims2()?;
        if k != kb {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions differ: {k} vs {kb}"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), m, k, n, &mut out);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// C = A · Bᵀ for A[m×n], B[p×n].
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(a).dims2()?;
        let (p, nb) = self.value(b).dims2()?;
        if n != nb {
            return Err(Error::Dimension(format!(
                "matmul_nt column counts differ: {n} vs {nb}"
            )));
        }
        let mut out = vec![0.0; m * p];
        matmul_nt_acc(self.value(a).data(), self.value(b).data(), m, n, p, &mut out);
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, p], out)?, Op::MatMulNt(a, b), needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    fn elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Dimension(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(shape, data)?, op, needs))
    }

    /// Add a `1×n` bias row to every row of `x`.
    pub fn add_row_broadcast(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        let (bm, bn) = self.value(bias).dims2()?;
        if bm != 1 || bn != n {
            return Err(Error::Dimension(format!(
                "bias must be 1x{n}, got {bm}x{bn}"
            )));
        }
        let bias_row = self.value(bias).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(&bias_row) {
                *v += b;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(
            Tensor::new(vec![m, n], data)?,
            Op::AddRowBroadcast(x, bias),
            needs,
        ))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v * c).collect();
        let shape = self.value(x).shape().to_vec();
        let needs = self.needs(x);
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Scale(x, c),
            needs,
        )
    }

    /// Stack `top` above `bottom`; both must have the same column count.
    pub fn concat_rows(&mut self, top: NodeId, bottom: NodeId) -> Result<NodeId> {
        let (tm, tn) = self.value(top).dims2()?;
        let (bm, bn) = self.value(bottom).dims2()?;
        if tn != bn {
            return Err(Error::Dimension(format!(
                "concat_rows column counts differ: {tn} vs {bn}"
            )));
        }
        let mut data = Vec::with_capacity((tm + bm) * tn);
        data.extend_from_slice(self.value(top).data());
        data.extend_from_slice(self.value(bottom).data());
        let needs = self.needs(top) || self.needs(bottom);
        Ok(self.push(
            Tensor::new(vec![tm + bm, tn], data)?,
            Op::ConcatRows(top, bottom),
            needs,
        ))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if start + len > m {
            return Err(Error::Dimension(format!(
                "slice_rows {start}..{} out of {m} rows",
                start + len
            )));
        }
        let data = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![len, n], data)?, Op::SliceRows(x, start), needs))
    }

    /// Column-wise mean over rows: `m×n -> 1×n`.
    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if m == 0 {
            return Err(Error::Usage("mean_rows over zero rows".into()));
        }
        let mut out = vec![0.0; n];
        for row in self.value(x).data().chunks(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = 1.0 / m as f64;
        for o in &mut out {
            *o *= inv;
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![1, n], out)?, Op::MeanRows(x), needs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.value(x).data().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.value(x).shape().to_vec();
        let needs = self.needs(x);
        self.push(
            Tensor::new(shape, data).expect("shape preserved"),
            Op::Relu(x),
            needs,
        )
    }

    /// Inverted dropout: each entry is zeroed with probability `rate` and
    /// survivors are scaled by 1/(1-rate), so evaluation mode is the
    /// identity and no rescaling happens at inference.
    pub fn dropout(
        &mut self,
        x: NodeId,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let shape = self.value(x).shape().to_vec();
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(shape, data)?, Op::Dropout(x, mask), needs))
    }

    /// Row-wise softmax, stabilized by per-row max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::SoftmaxRows(x), needs))
    }

    /// Per-row layer normalization over the last axis with scalar gain and
    /// shift: `gamma * (x - mean) / sqrt(var + eps) + beta`.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let (m, n) = self.value(x).dims2()?;
        if n < 2 {
            return Err(Error::Dimension(format!(
                "layer_norm needs at least 2 features per row, got {n}"
            )));
        }
        if self.value(gamma).len() != 1 || self.value(beta).len() != 1 {
            return Err(Error::Dimension("layer_norm gamma/beta must be scalars".into()));
        }
        let g = self.value(gamma).data()[0];
        let b = self.value(beta).data()[0];
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = g * (*v - mean) * inv_std + b;
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            Tensor::new(vec![m, n], data)?,
            Op::LayerNorm { x, gamma, beta, eps },
            needs,
        ))
    }

    /// Scalar Σ xᵢ².
    pub fn sum_squares(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).data().iter().map(|&v| v * v).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), needs)
    }

    /// Reverse-mode sweep from a scalar `loss` node. Returns the adjoint of
    /// every node; leaves unreachable from the loss keep zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Vec<f64>> = self
            .nodes
            .iter()
            .map(|n| vec![0.0; n.value.len()])
            .collect();
        grads[loss.0][0] = 1.0;

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            // The adjoint buffer is swapped out so input buffers can be
            // borrowed mutably below; it is returned before moving on.
            let grad = std::mem::take(&mut grads[idx]);
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = (self.value(*a).rows(), self.value(*a).cols());
                    let n = self.value(*b).cols();
                    if self.needs(*a) {
                        // dA += G · Bᵀ
                        let b_data = self.value(*b).data();
                        matmul_nt_acc(&grad, b_data, m, n, k, &mut grads[a.0]);
                    }
                    if self.needs(*b) {
                        // dB += Aᵀ · G
                        let a_data = self.value(*a).data();
                        matmul_tn_acc(a_data, &grad, m, k, n, &mut grads[b.0]);
                    }
                }
                Op::MatMulNt(a, b) => {
                    // C = A·Bᵀ with A[m×n], B[p×n], G[m×p]
                    let (m, n) = (self.value(*a).rows(), self.value(*a).cols());
                    let p = self.value(*b).rows();
                    if self.needs(*a) {
                        // dA += G · B
                        let b_data = self.value(*b).data();
                        matmul_acc(&grad, b_data, m, p, n, &mut grads[a.0]);
                    }
                    if self.needs(*b) {
                        // dB += Gᵀ · A
                        let a_data = self.value(*a).data();
                        matmul_tn_acc(&grad, a_data, m, p, n, &mut grads[b.0]);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        axpy(&mut grads[a.0], &grad, 1.0);
                    }
                    if self.needs(*b) {
                        axpy(&mut grads[b.0], &grad, 1.0);
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(*a) {
                        axpy(&mut grads[a.0], &grad, 1.0);
                    }
                    if self.needs(*b) {
                        axpy(&mut grads[b.0], &grad, -1.0);
                    }
                }
                Op::AddRowBroadcast(x, bias) => {
                    if self.needs(*x) {
                        axpy(&mut grads[x.0], &grad, 1.0);
                    }
                    if self.needs(*bias) {
                        let n = self.value(*bias).cols();
                        let dbias = &mut grads[bias.0];
                        for row in grad.chunks(n) {
                            for (d, g) in dbias.iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                    }
                }
                Op::Scale(x, c) => {
                    if self.needs(*x) {
                        axpy(&mut grads[x.0], &grad, *c);
                    }
                }
                Op::ConcatRows(top, bottom) => {
                    let split = self.value(*top).len();
                    if self.needs(*top) {
                        axpy(&mut grads[top.0], &grad[..split], 1.0);
                    }
                    if self.needs(*bottom) {
                        axpy(&mut grads[bottom.0], &grad[split..], 1.0);
                    }
                }
                Op::SliceRows(x, start) => {
                    if self.needs(*x) {
                        let n = self.value(*x).cols();
                        let offset = start * n;
                        axpy(&mut grads[x.0][offset..offset + grad.len()], &grad, 1.0);
                    }
                }
                Op::MeanRows(x) => {
                    if self.needs(*x) {
                        let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                        let inv = 1.0 / m as f64;
                        for row in grads[x.0].chunks_mut(n) {
                            for (d, g) in row.iter_mut().zip(&grad) {
                                *d += g * inv;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    if self.needs(*x) {
                        let xv = self.value(*x).data();
                        for ((d, &g), &v) in grads[x.0].iter_mut().zip(&grad).zip(xv) {
                            if v > 0.0 {
                                *d += g;
                            }
                        }
                    }
                }
                Op::Dropout(x, mask) => {
                    if self.needs(*x) {
                        for ((d, &g), &m) in grads[x.0].iter_mut().zip(&grad).zip(mask) {
                            *d += g * m;
                        }
                    }
                }
                Op::SoftmaxRows(x) => {
                    if self.needs(*x) {
                        let n = self.value(idx_id(idx)).cols();
                        let s = self.value(idx_id(idx)).data();
                        for (row_i, (g_row, s_row)) in
                            grad.chunks(n).zip(s.chunks(n)).enumerate()
                        {
                            let dot: f64 = g_row.iter().zip(s_row).map(|(g, s)| g * s).sum();
                            let dx = &mut grads[x.0][row_i * n..(row_i + 1) * n];
                            for ((d, &g), &sv) in dx.iter_mut().zip(g_row).zip(s_row) {
                                *d += sv * (g - dot);
                            }
                        }
                    }
                }
                Op::LayerNorm { x, gamma, beta, eps } => {
                    let n = self.value(*x).cols();
                    let xv = self.value(*x).data();
                    let g_scalar = self.value(*gamma).data()[0];
                    let inv_n = 1.0 / n as f64;
                    for (row_i, (x_row, g_row)) in xv.chunks(n).zip(grad.chunks(n)).enumerate() {
                        let mean = x_row.iter().sum::<f64>() * inv_n;
                        let var =
                            x_row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() * inv_n;
                        let inv_std = 1.0 / (var + eps).sqrt();
                        let g_sum: f64 = g_row.iter().sum();
                        let gx_sum: f64 = g_row
                            .iter()
                            .zip(x_row)
                            .map(|(&g, &v)| g * (v - mean) * inv_std)
                            .sum();
                        if self.needs(*x) {
                            let dx = &mut grads[x.0][row_i * n..(row_i + 1) * n];
                            for ((d, &g), &v) in dx.iter_mut().zip(g_row).zip(x_row) {
                                let xhat = (v - mean) * inv_std;
                                *d += g_scalar * inv_std * (g - inv_n * g_sum - xhat * inv_n * gx_sum);
                            }
                        }
                        if self.needs(*gamma) {
                            grads[gamma.0][0] += gx_sum;
                        }
                        if self.needs(*beta) {
                            grads[beta.0][0] += g_sum;
                        }
                    }
                }
                Op::SumSquares(x) => {
                    if self.needs(*x) {
                        let g = grad[0];
                        let xv = self.value(*x).data();
                        for (d, &v) in grads[x.0].iter_mut().zip(xv) {
                            *d += 2.0 * v * g;
                        }
                    }
                }
            }
            grads[idx] = grad;
        }
        Ok(Gradients { grads })
    }
}

fn idx_id(idx: usize) -> NodeId {
    NodeId(idx)
}

fn axpy(dst: &mut [f64], src: &[f64], alpha: f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

/// C[m×n] += A[m×k] · B[k×n]
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// C[m×p] += A[m×n] · B[p×n]ᵀ
fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, n: usize, p: usize, c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        let c_row = &mut c[i * p..(i + 1) * p];
        for (q, cv) in c_row.iter_mut().enumerate() {
            let b_row = &b[q * n..(q + 1) * n];
            let mut s = 0.0;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                s += av * bv;
            }
            *cv += s;
        }
    }
}

/// C[k×n] += A[m×k]ᵀ · B[m×n]
fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, c: &mut [f64]) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &a_ip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}
