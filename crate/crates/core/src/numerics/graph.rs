//! Reverse-mode autodiff over a recorded computation graph.
//!
//! Operations are recorded in topological order as they execute;
//! [`Graph::backward`] walks the record in reverse, accumulating gradients
//! at fan-out nodes. Every primitive defines its forward value and exact
//! reverse-mode gradient here.

use crate::rng::Rng;

use super::{NumericsError, Result, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

struct Node {
    value: Tensor,
    grad: Vec<f64>,
    op: Op,
}

enum Op {
    Leaf,
    /// `a @ b`, optionally transposing `b`.
    MatMul {
        a: NodeId,
        b: NodeId,
        transpose_b: bool,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    /// Adds a length-`c` bias row to every row of an `r x c` matrix.
    AddRow {
        a: NodeId,
        bias: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    /// Broadcast-multiplies a tensor by a one-element tensor.
    MulScalar {
        a: NodeId,
        s: NodeId,
    },
    Concat {
        a: NodeId,
        b: NodeId,
        a_cols: usize,
    },
    MaskedSoftmax {
        x: NodeId,
        mask: Vec<bool>,
    },
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Exp {
        x: NodeId,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        /// Per-row (mean, 1/sqrt(var + eps)) saved by the forward pass.
        stats: Vec<(f64, f64)>,
    },
    Dropout {
        x: NodeId,
        keep: Vec<bool>,
        keep_prob: f64,
    },
    EmbedLookup {
        table: NodeId,
        indices: Vec<usize>,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    /// Summed binary cross-entropy on logits over masked-in positions.
    MaskedBceSum {
        logits: NodeId,
        labels: Vec<f64>,
        mask: Vec<bool>,
    },
}

const LAYER_NORM_EPS: f64 = 1e-5;

/// Recorded differentiable computation.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a leaf node (parameter or constant input).
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient buffer of a node; valid after [`Graph::backward`].
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].grad
    }

    pub fn grad_tensor(&self, id: NodeId) -> Tensor {
        let shape = self.nodes[id.0].value.shape().to_vec();
        Tensor::new(shape, self.nodes[id.0].grad.clone()).expect("grad matches value shape")
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: Vec::new(),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn shape2(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        let t = &self.nodes[id.0].value;
        match t.shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(NumericsError::InvalidShape {
                op,
                shape: other.to_vec(),
                reason: "expected a rank-2 tensor".into(),
            }),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape2(a, "matmul")?;
        let (k2, n) = self.shape2(b, "matmul")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let out = mm(
            self.nodes[a.0].value.data(),
            m,
            k,
            self.nodes[b.0].value.data(),
            n,
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                transpose_b: false,
            },
        ))
    }

    /// `a @ b^T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape2(a, "matmul_nt")?;
        let (n, k2) = self.shape2(b, "matmul_nt")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul_nt",
                lhs: vec![m, k],
                rhs: vec![n, k2],
            });
        }
        let out = mm_nt(
            self.nodes[a.0].value.data(),
            m,
            k,
            self.nodes[b.0].value.data(),
            n,
        );
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(
            value,
            Op::MatMul {
                a,
                b,
                transpose_b: true,
            },
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("add", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape2(a, "add_row")?;
        let bn = self.nodes[bias.0].value.numel();
        if bn != c {
            return Err(NumericsError::ShapeMismatch {
                op: "add_row",
                lhs: vec![r, c],
                rhs: self.nodes[bias.0].value.shape().to_vec(),
            });
        }
        let bdata = self.nodes[bias.0].value.data();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = self.nodes[a.0].value.row(i);
            for j in 0..c {
                data.push(row[j] + bdata[j]);
            }
        }
        let value = Tensor::new(vec![r, c], data)?;
        Ok(self.push(value, Op::AddRow { a, bias }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_same_shape("mul", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data()
            .iter()
            .zip(self.nodes[b.0].value.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    /// Multiplies every element of `a` by the single element of `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if !self.nodes[s.0].value.is_scalar() {
            return Err(NumericsError::InvalidShape {
                op: "mul_scalar",
                shape: self.nodes[s.0].value.shape().to_vec(),
                reason: "scalar operand must have exactly one element".into(),
            });
        }
        let sv = self.nodes[s.0].value.item();
        let data: Vec<f64> = self.nodes[a.0].value.data().iter().map(|x| x * sv).collect();
        let value = Tensor::new(self.nodes[a.0].value.shape().to_vec(), data)?;
        Ok(self.push(value, Op::MulScalar { a, s }))
    }

    /// Concatenates two matrices along the last axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c1) = self.shape2(a, "concat")?;
        let (r2, c2) = self.shape2(b, "concat")?;
        if r != r2 {
            return Err(NumericsError::ShapeMismatch {
                op: "concat",
                lhs: vec![r, c1],
                rhs: vec![r2, c2],
            });
        }
        let mut data = Vec::with_capacity(r * (c1 + c2));
        for i in 0..r {
            data.extend_from_slice(self.nodes[a.0].value.row(i));
            data.extend_from_slice(self.nodes[b.0].value.row(i));
        }
        let value = Tensor::new(vec![r, c1 + c2], data)?;
        Ok(self.push(value, Op::Concat { a, b, a_cols: c1 }))
    }

    /// Softmax over the last axis restricted to unmasked positions.
    ///
    /// Masked positions are exactly 0 in the output; rows with no unmasked
    /// position come out all-zero.
    pub fn masked_softmax(&mut self, x: NodeId, mask: &[bool]) -> Result<NodeId> {
        let t = &self.nodes[x.0].value;
        if mask.len() != t.numel() {
            return Err(NumericsError::InvalidShape {
                op: "masked_softmax",
                shape: t.shape().to_vec(),
                reason: format!("mask length {} != element count", mask.len()),
            });
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            let row = &t.data()[i * cols..(i + 1) * cols];
            let mrow = &mask[i * cols..(i + 1) * cols];
            softmax_row(row, mrow, &mut data[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(
            value,
            Op::MaskedSoftmax {
                x,
                mask: mask.to_vec(),
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0]
            .value
            .data()
            .iter()
            .map(|v| v.max(0.0))
            .collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(value, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| sigmoid(*v)).collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(value, Op::Sigmoid { x })
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| v.exp()).collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(value, Op::Exp { x })
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let (rows, cols) = {
            let t = &self.nodes[x.0].value;
            (t.rows(), t.cols())
        };
        for (name, id) in [("gain", gain), ("bias", bias)] {
            if self.nodes[id.0].value.numel() != cols {
                return Err(NumericsError::InvalidShape {
                    op: "layer_norm",
                    shape: self.nodes[id.0].value.shape().to_vec(),
                    reason: format!("{name} must have {cols} elements"),
                });
            }
        }
        let g = self.nodes[gain.0].value.data().to_vec();
        let b = self.nodes[bias.0].value.data().to_vec();
        let t = &self.nodes[x.0].value;
        let mut data = vec![0.0; rows * cols];
        let mut stats = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = &t.data()[i * cols..(i + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            stats.push((mean, inv));
            for j in 0..cols {
                data[i * cols + j] = (row[j] - mean) * inv * g[j] + b[j];
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, stats }))
    }

    /// Inverted dropout. Identity (returns `x` itself) when not training or
    /// when the rate is zero.
    pub fn dropout(&mut self, x: NodeId, rate: f64, train: bool, seed: u64) -> NodeId {
        if !train || rate == 0.0 {
            return x;
        }
        let keep_prob = 1.0 - rate;
        let mut rng = Rng::new(seed);
        let t = &self.nodes[x.0].value;
        let keep: Vec<bool> = (0..t.numel()).map(|_| !rng.bernoulli(rate)).collect();
        let data: Vec<f64> = t
            .data()
            .iter()
            .zip(&keep)
            .map(|(v, k)| if *k { v / keep_prob } else { 0.0 })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), data).unwrap();
        self.push(value, Op::Dropout { x, keep, keep_prob })
    }

    /// Gathers rows of `table` by index.
    pub fn embed_lookup(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.shape2(table, "embed_lookup")?;
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &idx in indices {
            if idx >= rows {
                return Err(NumericsError::IndexOutOfRange { index: idx, rows });
            }
            data.extend_from_slice(self.nodes[table.0].value.row(idx));
        }
        let value = Tensor::new(vec![indices.len(), cols], data)?;
        Ok(self.push(
            value,
            Op::EmbedLookup {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].value.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(self.nodes[x.0].value.shape().to_vec(), data).unwrap();
        self.push(value, Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let n = self.nodes[x.0].value.numel();
        let s: f64 = self.nodes[x.0].value.data().iter().sum();
        self.push(Tensor::scalar(s / n as f64), Op::Mean { x })
    }

    /// Sum over masked-in positions of the binary cross-entropy between
    /// `sigmoid(logits)` and `labels`, computed stably from the logits.
    pub fn masked_bce_sum(&mut self, logits: NodeId, labels: &[f64], mask: &[bool]) -> Result<NodeId> {
        let t = &self.nodes[logits.0].value;
        if labels.len() != t.numel() || mask.len() != t.numel() {
            return Err(NumericsError::InvalidShape {
                op: "masked_bce_sum",
                shape: t.shape().to_vec(),
                reason: "labels/mask length must match logits".into(),
            });
        }
        let mut total = 0.0;
        for (i, z) in t.data().iter().enumerate() {
            if mask[i] {
                total += z.max(0.0) - z * labels[i] + (-z.abs()).exp().ln_1p();
            }
        }
        let value = Tensor::scalar(total);
        Ok(self.push(
            value,
            Op::MaskedBceSum {
                logits,
                labels: labels.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    fn check_same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        if sa != sb {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    /// Populates gradient buffers of every node reachable from `out`.
    ///
    /// Gradients accumulate at fan-out: a node feeding several ops receives
    /// the sum of its downstream contributions.
    pub fn backward(&mut self, out: NodeId) -> Result<()> {
        if !self.nodes[out.0].value.is_scalar() {
            return Err(NumericsError::NonScalarOutput(
                self.nodes[out.0].value.shape().to_vec(),
            ));
        }
        for node in &mut self.nodes {
            node.grad = vec![0.0; node.value.numel()];
        }
        self.nodes[out.0].grad[0] = 1.0;

        for i in (0..=out.0).rev() {
            // Split borrows: take the grad out, put it back after.
            let go = std::mem::take(&mut self.nodes[i].grad);
            self.propagate(i, &go);
            self.nodes[i].grad = go;
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, go: &[f64]) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul { a, b, transpose_b } => {
                let (a, b, transpose_b) = (*a, *b, *transpose_b);
                let (m, k) = {
                    let s = self.nodes[a.0].value.shape();
                    (s[0], s[1])
                };
                let n = if transpose_b {
                    self.nodes[b.0].value.shape()[0]
                } else {
                    self.nodes[b.0].value.shape()[1]
                };
                if !transpose_b {
                    // dA += go @ B^T ; dB += A^T @ go
                    let da = mm_nt(go, m, n, self.nodes[b.0].value.data(), k);
                    accumulate(&mut self.nodes[a.0].grad, &da);
                    let db = mm_tn(self.nodes[a.0].value.data(), m, k, go, n);
                    accumulate(&mut self.nodes[b.0].grad, &db);
                } else {
                    // C = A @ B^T: dA += go @ B ; dB += go^T @ A
                    let da = mm(go, m, n, self.nodes[b.0].value.data(), k);
                    accumulate(&mut self.nodes[a.0].grad, &da);
                    let db = mm_tn(go, m, n, self.nodes[a.0].value.data(), k);
                    accumulate(&mut self.nodes[b.0].grad, &db);
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                accumulate(&mut self.nodes[a.0].grad, go);
                accumulate(&mut self.nodes[b.0].grad, go);
            }
            Op::AddRow { a, bias } => {
                let (a, bias) = (*a, *bias);
                accumulate(&mut self.nodes[a.0].grad, go);
                let c = self.nodes[bias.0].value.numel();
                let r = go.len() / c;
                for i in 0..r {
                    for j in 0..c {
                        self.nodes[bias.0].grad[j] += go[i * c + j];
                    }
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].value.data().to_vec();
                let bv = self.nodes[b.0].value.data().to_vec();
                for (j, g) in go.iter().enumerate() {
                    self.nodes[a.0].grad[j] += g * bv[j];
                }
                for (j, g) in go.iter().enumerate() {
                    self.nodes[b.0].grad[j] += g * av[j];
                }
            }
            Op::MulScalar { a, s } => {
                let (a, s) = (*a, *s);
                let sv = self.nodes[s.0].value.item();
                let av = self.nodes[a.0].value.data().to_vec();
                for (j, g) in go.iter().enumerate() {
                    self.nodes[a.0].grad[j] += g * sv;
                }
                let mut ds = 0.0;
                for (j, g) in go.iter().enumerate() {
                    ds += g * av[j];
                }
                self.nodes[s.0].grad[0] += ds;
            }
            Op::Concat { a, b, a_cols } => {
                let (a, b, c1) = (*a, *b, *a_cols);
                let c2 = self.nodes[b.0].value.cols();
                let rows = self.nodes[a.0].value.rows();
                for i in 0..rows {
                    for j in 0..c1 {
                        self.nodes[a.0].grad[i * c1 + j] += go[i * (c1 + c2) + j];
                    }
                    for j in 0..c2 {
                        self.nodes[b.0].grad[i * c2 + j] += go[i * (c1 + c2) + c1 + j];
                    }
                }
            }
            Op::MaskedSoftmax { x, mask } => {
                let x = *x;
                let mask = mask.clone();
                let y = self.nodes[i].value.data().to_vec();
                let cols = self.nodes[i].value.cols();
                let rows = self.nodes[i].value.rows();
                for r in 0..rows {
                    let base = r * cols;
                    let mut dot = 0.0;
                    for j in 0..cols {
                        if mask[base + j] {
                            dot += go[base + j] * y[base + j];
                        }
                    }
                    for j in 0..cols {
                        if mask[base + j] {
                            self.nodes[x.0].grad[base + j] += y[base + j] * (go[base + j] - dot);
                        }
                    }
                }
            }
            Op::Relu { x } => {
                let x = *x;
                let xv = self.nodes[x.0].value.data().to_vec();
                for (j, g) in go.iter().enumerate() {
                    if xv[j] > 0.0 {
                        self.nodes[x.0].grad[j] += g;
                    }
                }
            }
            Op::Sigmoid { x } => {
                let x = *x;
                let y = self.nodes[i].value.data().to_vec();
                for (j, g) in go.iter().enumerate() {
                    self.nodes[x.0].grad[j] += g * y[j] * (1.0 - y[j]);
                }
            }
            Op::Exp { x } => {
                let x = *x;
                let y = self.nodes[i].value.data().to_vec();
                for (j, g) in go.iter().enumerate() {
                    self.nodes[x.0].grad[j] += g * y[j];
                }
            }
            Op::LayerNorm { x, gain, bias, stats } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let stats = stats.clone();
                let cols = self.nodes[x.0].value.cols();
                let xv = self.nodes[x.0].value.data().to_vec();
                let gv = self.nodes[gain.0].value.data().to_vec();
                for (r, &(mean, inv)) in stats.iter().enumerate() {
                    let base = r * cols;
                    let mut sum_gg = 0.0;
                    let mut sum_ggy = 0.0;
                    for j in 0..cols {
                        let yj = (xv[base + j] - mean) * inv;
                        let gg = go[base + j] * gv[j];
                        sum_gg += gg;
                        sum_ggy += gg * yj;
                        self.nodes[gain.0].grad[j] += go[base + j] * yj;
                        self.nodes[bias.0].grad[j] += go[base + j];
                    }
                    let c = cols as f64;
                    for j in 0..cols {
                        let yj = (xv[base + j] - mean) * inv;
                        let gg = go[base + j] * gv[j];
                        self.nodes[x.0].grad[base + j] +=
                            inv * (gg - sum_gg / c - yj * sum_ggy / c);
                    }
                }
            }
            Op::Dropout { x, keep, keep_prob } => {
                let x = *x;
                let keep = keep.clone();
                let kp = *keep_prob;
                for (j, g) in go.iter().enumerate() {
                    if keep[j] {
                        self.nodes[x.0].grad[j] += g / kp;
                    }
                }
            }
            Op::EmbedLookup { table, indices } => {
                let table = *table;
                let indices = indices.clone();
                let cols = self.nodes[table.0].value.cols();
                for (r, idx) in indices.iter().enumerate() {
                    for j in 0..cols {
                        self.nodes[table.0].grad[idx * cols + j] += go[r * cols + j];
                    }
                }
            }
            Op::Scale { x, c } => {
                let (x, c) = (*x, *c);
                for (j, g) in go.iter().enumerate() {
                    self.nodes[x.0].grad[j] += g * c;
                }
            }
            Op::Sum { x } => {
                let x = *x;
                let g = go[0];
                for d in self.nodes[x.0].grad.iter_mut() {
                    *d += g;
                }
            }
            Op::Mean { x } => {
                let x = *x;
                let n = self.nodes[x.0].value.numel() as f64;
                let g = go[0] / n;
                for d in self.nodes[x.0].grad.iter_mut() {
                    *d += g;
                }
            }
            Op::MaskedBceSum { logits, labels, mask } => {
                let logits = *logits;
                let labels = labels.clone();
                let mask = mask.clone();
                let zv = self.nodes[logits.0].value.data().to_vec();
                let g = go[0];
                for j in 0..zv.len() {
                    if mask[j] {
                        self.nodes[logits.0].grad[j] += g * (sigmoid(zv[j]) - labels[j]);
                    }
                }
            }
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax of one row over unmasked positions; masked outputs are exactly 0.
pub fn softmax_row(row: &[f64], mask: &[bool], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (j, &m) in mask.iter().enumerate() {
        if m && row[j] > max {
            max = row[j];
        }
    }
    if max == f64::NEG_INFINITY {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        return;
    }
    let mut sum = 0.0;
    for (j, &m) in mask.iter().enumerate() {
        if m {
            let e = (row[j] - max).exp();
            out[j] = e;
            sum += e;
        } else {
            out[j] = 0.0;
        }
    }
    for (j, &m) in mask.iter().enumerate() {
        if m {
            out[j] /= sum;
        }
    }
}

/// `a (m x k) @ b (k x n)`; inner accumulation ascending in `k`.
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// `a (m x k) @ b^T (b is n x k)`.
fn mm_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// `a^T (a is m x k) @ b (m x n)` -> `k x n`; accumulation ascending in `m`.
fn mm_tn(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    mod per_primitive_gradients {
        //! Every primitive's analytic gradient against central differences.

        use super::*;
        use crate::numerics::{gradcheck, GradCheckConfig, Result};

        /// Checks d/dparams of `sum(build(params) . pseudo_weights)`.
        fn check<F>(params: Vec<Tensor>, build: F)
        where
            F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
        {
            let run = |ts: &[Tensor], want_grads: bool| -> Result<(f64, Vec<Tensor>)> {
                let mut g = Graph::new();
                let ids: Vec<NodeId> = ts.iter().map(|t| g.leaf(t.clone())).collect();
                let out = build(&mut g, &ids)?;
                // Weighted sum keeps every output coordinate influential.
                let w = pseudo_weights(g.value(out));
                let wn = g.leaf(w);
                let prod = g.mul(out, wn)?;
                let loss = g.sum(prod);
                let val = g.value(loss).item();
                let grads = if want_grads {
                    g.backward(loss)?;
                    ids.iter().map(|id| g.grad_tensor(*id)).collect()
                } else {
                    Vec::new()
                };
                Ok((val, grads))
            };
            let err = gradcheck(
                &params,
                |ts| run(ts, false).map(|(v, _)| v),
                |ts| run(ts, true).map(|(_, g)| g),
                &GradCheckConfig::default(),
            )
            .unwrap();
            assert!(err <= 1e-4, "max rel err {err}");
        }

        fn pseudo_weights(like: &Tensor) -> Tensor {
            let mut rng = Rng::new(like.numel() as u64 + 1);
            let data: Vec<f64> = (0..like.numel()).map(|_| 0.5 + rng.next_f64()).collect();
            Tensor::new(like.shape().to_vec(), data).unwrap()
        }

        fn randn(shape: Vec<usize>, seed: u64) -> Tensor {
            let mut rng = Rng::new(seed);
            Tensor::randn(shape, 1.0, &mut rng)
        }

        #[test]
        fn matmul_both_orientations() {
            check(vec![randn(vec![3, 4], 1), randn(vec![4, 2], 2)], |g, p| {
                g.matmul(p[0], p[1])
            });
            check(vec![randn(vec![3, 4], 3), randn(vec![5, 4], 4)], |g, p| {
                g.matmul_nt(p[0], p[1])
            });
        }

        #[test]
        fn elementwise_and_broadcast_ops() {
            check(vec![randn(vec![2, 3], 5), randn(vec![2, 3], 6)], |g, p| {
                g.add(p[0], p[1])
            });
            check(vec![randn(vec![2, 3], 7), randn(vec![2, 3], 8)], |g, p| {
                g.mul(p[0], p[1])
            });
            check(vec![randn(vec![3, 4], 9), randn(vec![4], 10)], |g, p| {
                g.add_row(p[0], p[1])
            });
            check(vec![randn(vec![2, 3], 11), randn(vec![1], 12)], |g, p| {
                g.mul_scalar(p[0], p[1])
            });
            check(vec![randn(vec![2, 2], 13), randn(vec![2, 3], 14)], |g, p| {
                g.concat(p[0], p[1])
            });
            check(vec![randn(vec![2, 3], 15)], |g, p| Ok(g.scale(p[0], -1.7)));
        }

        #[test]
        fn activations_and_norms() {
            // ReLU probed away from its kink.
            let mut x = randn(vec![2, 4], 16);
            for v in x.data_mut() {
                if v.abs() < 0.05 {
                    *v += 0.1;
                }
            }
            check(vec![x], |g, p| Ok(g.relu(p[0])));
            check(vec![randn(vec![2, 3], 17)], |g, p| Ok(g.sigmoid(p[0])));
            check(vec![randn(vec![2, 3], 18)], |g, p| Ok(g.exp(p[0])));
            check(
                vec![randn(vec![3, 4], 19), randn(vec![4], 20), randn(vec![4], 21)],
                |g, p| g.layer_norm(p[0], p[1], p[2]),
            );
        }

        #[test]
        fn masked_and_stochastic_ops() {
            let mask = [true, false, true, true, false, true, true, true];
            check(vec![randn(vec![2, 4], 22)], move |g, p| {
                g.masked_softmax(p[0], &mask)
            });
            // The seed pins the dropout mask, so the op is differentiable.
            check(vec![randn(vec![2, 4], 23)], |g, p| {
                Ok(g.dropout(p[0], 0.4, true, 99))
            });
            check(vec![randn(vec![4, 3], 24)], |g, p| {
                g.embed_lookup(p[0], &[2, 0, 2, 3])
            });
        }

        #[test]
        fn reductions_and_loss() {
            check(vec![randn(vec![2, 3], 25)], |g, p| {
                let s = g.sum(p[0]);
                Ok(s)
            });
            check(vec![randn(vec![2, 3], 26)], |g, p| {
                let m = g.mean(p[0]);
                Ok(m)
            });
            let labels = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
            let mask = [true, true, false, true, true, true];
            check(vec![randn(vec![2, 3], 27)], move |g, p| {
                g.masked_bce_sum(p[0], &labels, &mask)
            });
        }
    }

    #[test]
    fn masked_softmax_uniform_when_equal() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[2.5, 2.5, 2.5]]));
        let y = g.masked_softmax(x, &[true, true, true]).unwrap();
        for v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn masked_softmax_single_valid_entry() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[5.0, 9.0]]));
        let y = g.masked_softmax(x, &[true, false]).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn masked_softmax_fully_masked_row_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[5.0, 9.0], &[1.0, 2.0]]));
        let y = g.masked_softmax(x, &[false, false, true, true]).unwrap();
        assert_eq!(g.value(y).row(0), &[0.0, 0.0]);
        let r1: f64 = g.value(y).row(1).iter().sum();
        assert!((r1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_population_sigma() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[1.0, 2.0, 3.0]]));
        let gain = g.leaf(Tensor::new(vec![3], vec![1.0; 3]).unwrap());
        let bias = g.leaf(Tensor::zeros(vec![3]));
        let y = g.layer_norm(x, gain, bias).unwrap();
        let v = g.value(y).data();
        assert!((v[0] + 1.2247).abs() < 1e-4, "{v:?}");
        assert!(v[1].abs() < 1e-12);
        assert!((v[2] - 1.2247).abs() < 1e-4);
    }

    #[test]
    fn backward_of_linear_map_is_input_broadcast() {
        // f = sum(W @ x) with fixed x: df/dW[i][j] = x[j]
        let mut g = Graph::new();
        let w = g.leaf(t(&[&[0.3, -0.2], &[0.1, 0.4], &[0.0, 1.0]]));
        let x = g.leaf(t(&[&[2.0], &[-3.0]]));
        let y = g.matmul(w, x).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(w), &[2.0, -3.0, 2.0, -3.0, 2.0, -3.0]);
    }

    #[test]
    fn sigmoid_gradient_at_zero() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(0.0));
        let y = g.sigmoid(x);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!((g.grad(x)[0] - 0.25).abs() < 1e-15);
        assert!((g.value(y).item() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[1.0, 2.0]]));
        let y = g.relu(x);
        assert!(matches!(
            g.backward(y),
            Err(NumericsError::NonScalarOutput(_))
        ));
    }

    #[test]
    fn fan_out_accumulates() {
        // f = sum(x * x) + sum(x): df/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[3.0, -1.0]]));
        let sq = g.mul(x, x).unwrap();
        let s1 = g.sum(sq);
        let s2 = g.sum(x);
        let f = g.add(s1, s2).unwrap();
        g.backward(f).unwrap();
        assert_eq!(g.grad(x), &[7.0, -1.0]);
    }

    #[test]
    fn backward_linear_in_fanned_in_records() {
        // Sum of two sub-computations equals the sum of their separate
        // gradients on the shared leaf.
        let build = |with_a: bool, with_b: bool| -> Vec<f64> {
            let mut g = Graph::new();
            let x = g.leaf(t(&[&[1.5, -0.5]]));
            let mut parts = Vec::new();
            if with_a {
                let y = g.mul(x, x).unwrap();
                parts.push(g.sum(y));
            }
            if with_b {
                let y = g.sigmoid(x);
                parts.push(g.sum(y));
            }
            let total = parts
                .into_iter()
                .reduce(|a, b| g.add(a, b).unwrap())
                .unwrap();
            g.backward(total).unwrap();
            g.grad(x).to_vec()
        };
        let both = build(true, true);
        let only_a = build(true, false);
        let only_b = build(false, true);
        for j in 0..2 {
            assert!((both[j] - (only_a[j] + only_b[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_seeded_and_identity_at_rate_zero() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[&[1.0, 2.0, 3.0, 4.0]]));
        let a = g.dropout(x, 0.5, true, 99);
        let b = g.dropout(x, 0.5, true, 99);
        assert_eq!(g.value(a).data(), g.value(b).data());
        let c = g.dropout(x, 0.0, true, 1);
        assert_eq!(c, x);
        let d = g.dropout(x, 0.5, false, 1);
        assert_eq!(d, x);
    }

    #[test]
    fn embed_lookup_scatters_gradient() {
        let mut g = Graph::new();
        let table = g.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let rows = g.embed_lookup(table, &[2, 0, 2]).unwrap();
        let s = g.sum(rows);
        g.backward(s).unwrap();
        assert_eq!(g.grad(table), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
        assert!(g.embed_lookup(table, &[3]).is_err());
    }

    #[test]
    fn matmul_shape_errors_name_op() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[&[1.0, 2.0]]));
        let b = g.leaf(t(&[&[1.0, 2.0]]));
        let err = g.matmul(a, b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn concat_roundtrips_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(t(&[&[1.0], &[2.0]]));
        let b = g.leaf(t(&[&[3.0, 4.0], &[5.0, 6.0]]));
        let c = g.concat(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let scaled = g.scale(c, 2.0);
        let s = g.sum(scaled);
        g.backward(s).unwrap();
        assert_eq!(g.grad(a), &[2.0, 2.0]);
        assert_eq!(g.grad(b), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn softmax_rows_are_distributions_for_random_inputs() {
        let mut rng = Rng::new(515);
        for _ in 0..200 {
            let rows = 1 + rng.next_range(4);
            let cols = 1 + rng.next_range(6);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.next_gaussian() * 3.0).collect();
            let mask: Vec<bool> = (0..rows * cols).map(|_| rng.bernoulli(0.7)).collect();
            let mut g = Graph::new();
            let x = g.leaf(Tensor::new(vec![rows, cols], data).unwrap());
            let y = g.masked_softmax(x, &mask).unwrap();
            for r in 0..rows {
                let mut sum = 0.0;
                let mut any = false;
                for c in 0..cols {
                    let v = g.value(y).get2(r, c);
                    if mask[r * cols + c] {
                        assert!(v >= 0.0);
                        sum += v;
                        any = true;
                    } else {
                        assert_eq!(v, 0.0);
                    }
                }
                if any {
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bce_matches_direct_formula() {
        let mut g = Graph::new();
        let z = g.leaf(t(&[&[0.0, 2.0, -1.0]]));
        let labels = [1.0, 0.0, 1.0];
        let mask = [true, true, false];
        let loss = g.masked_bce_sum(z, &labels, &mask).unwrap();
        let p0: f64 = 0.5;
        let p1: f64 = 1.0 / (1.0 + (-2.0f64).exp());
        let expect = -(p0.ln()) - (1.0 - p1).ln();
        assert!((g.value(loss).item() - expect).abs() < 1e-12);
        g.backward(loss).unwrap();
        // dL/dz = sigmoid(z) - r on masked-in positions, 0 elsewhere.
        let gz = g.grad(z);
        assert!((gz[0] - (0.5 - 1.0)).abs() < 1e-12);
        assert!((gz[1] - p1).abs() < 1e-12);
        assert_eq!(gz[2], 0.0);
    }
}
