//! Minimal reverse-mode autodiff over `f64` matrices.
//!
//! A [`Graph`] is an append-only tape: every operation evaluates eagerly
//! and records enough structure for [`Graph::backward`] to accumulate
//! gradients in one reverse sweep. Matrices are column-oriented: a token
//! sequence is a `d x Z` matrix whose columns are token embeddings, and
//! vectors are `m x 1` matrices.
//!
//! Only the operations the encoder and the multi-task heads need are
//! implemented; everything is single-threaded and deterministic.

use ndarray::{Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    /// Add an `m x 1` column vector to every column of an `m x n` matrix.
    AddCol(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Abs(NodeId),
    /// Softmax along axis 0 of each column, restricted to rows where
    /// `valid` is true; invalid rows get exactly 0.
    MaskedSoftmaxCols(NodeId, Vec<bool>),
    /// Log-softmax along axis 0 of each column (no mask).
    LogSoftmaxCols(NodeId),
    /// Per-column layer normalization with learned gain/bias (`m x 1`).
    LayerNormCols {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    SliceRows(NodeId, usize, usize),
    ConcatRows(Vec<NodeId>),
    /// Select columns of a table by index, with repeats allowed.
    GatherCols(NodeId, Vec<usize>),
    /// Extract a single element as a `1 x 1` matrix.
    Pick(NodeId, usize, usize),
}

const LAYER_NORM_EPS: f64 = 1e-5;

struct Node {
    op: Op,
    value: Array2<f64>,
}

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

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "node is not a scalar");
        v[(0, 0)]
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).t().to_owned();
        self.push(Op::Transpose(a), v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).dim(), self.value(b).dim());
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn add_col(&mut self, mat: NodeId, col: NodeId) -> NodeId {
        let (m, _) = self.value(mat).dim();
        assert_eq!(self.value(col).dim(), (m, 1));
        let v = self.value(mat) + self.value(col);
        self.push(Op::AddCol(mat, col), v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) + c;
        self.push(Op::AddScalar(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::abs);
        self.push(Op::Abs(a), v)
    }

    pub fn masked_softmax_cols(&mut self, a: NodeId, valid: Vec<bool>) -> NodeId {
        let x = self.value(a);
        let (m, n) = x.dim();
        assert_eq!(valid.len(), m);
        assert!(valid.iter().any(|&v| v), "softmax needs a valid position");
        let mut out = Array2::zeros((m, n));
        for j in 0..n {
            let max = (0..m)
                .filter(|&i| valid[i])
                .map(|i| x[(i, j)])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for i in 0..m {
                if valid[i] {
                    let e = (x[(i, j)] - max).exp();
                    out[(i, j)] = e;
                    denom += e;
                }
            }
            for i in 0..m {
                if valid[i] {
                    out[(i, j)] /= denom;
                }
            }
        }
        self.push(Op::MaskedSoftmaxCols(a, valid), out)
    }

    pub fn log_softmax_cols(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let (m, n) = x.dim();
        let mut out = Array2::zeros((m, n));
        for j in 0..n {
            let max = (0..m).map(|i| x[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let log_denom = (0..m).map(|i| (x[(i, j)] - max).exp()).sum::<f64>().ln() + max;
            for i in 0..m {
                out[(i, j)] = x[(i, j)] - log_denom;
            }
        }
        self.push(Op::LogSoftmaxCols(a), out)
    }

    pub fn layer_norm_cols(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (m, n) = xv.dim();
        assert_eq!(self.value(gain).dim(), (m, 1));
        assert_eq!(self.value(bias).dim(), (m, 1));
        let mut out = Array2::zeros((m, n));
        for j in 0..n {
            let col = xv.column(j);
            let mean = col.sum() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for i in 0..m {
                let normed = (col[i] - mean) * inv_std;
                out[(i, j)] = self.value(gain)[(i, 0)] * normed + self.value(bias)[(i, 0)];
            }
        }
        self.push(Op::LayerNormCols { x, gain, bias }, out)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let x = self.value(a);
        assert!(start + len <= x.nrows());
        let v = x.slice(ndarray::s![start..start + len, ..]).to_owned();
        self.push(Op::SliceRows(a, start, len), v)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("row concat");
        self.push(Op::ConcatRows(parts.to_vec()), v)
    }

    pub fn gather_cols(&mut self, table: NodeId, ids: Vec<usize>) -> NodeId {
        let t = self.value(table);
        let (m, cols) = t.dim();
        let mut v = Array2::zeros((m, ids.len()));
        for (j, &id) in ids.iter().enumerate() {
            assert!(id < cols, "gather index {id} out of {cols}");
            v.column_mut(j).assign(&t.column(id));
        }
        self.push(Op::GatherCols(table, ids), v)
    }

    pub fn pick(&mut self, a: NodeId, row: usize, col: usize) -> NodeId {
        let v = Array2::from_elem((1, 1), self.value(a)[(row, col)]);
        self.push(Op::Pick(a, row, col), v)
    }

    /// Weighted sum of scalar nodes, as a scalar node.
    pub fn sum_scaled(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        assert!(!terms.is_empty());
        let mut acc = self.scale(terms[0].0, terms[0].1);
        for &(id, w) in &terms[1..] {
            let scaled = self.scale(id, w);
            acc = self.add(acc, scaled);
        }
        acc
    }

    /// Reverse sweep from a scalar root. Returns one gradient matrix per
    /// node, shaped like the node's value.
    pub fn backward(&self, root: NodeId) -> Vec<Array2<f64>> {
        assert_eq!(self.value(root).dim(), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Array2<f64>> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.dim()))
            .collect();
        grads[root.0][(0, 0)] = 1.0;

        for idx in (0..=root.0).rev() {
            if grads[idx].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = grads[idx].clone();
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    grads[a.0] += &ga;
                    grads[b.0] += &gb;
                }
                Op::Transpose(a) => {
                    grads[a.0] += &g.t();
                }
                Op::Add(a, b) => {
                    grads[a.0] += &g;
                    grads[b.0] += &g;
                }
                Op::AddCol(mat, col) => {
                    grads[mat.0] += &g;
                    let summed = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    grads[col.0] += &summed;
                }
                Op::Scale(a, c) => {
                    grads[a.0].scaled_add(*c, &g);
                }
                Op::AddScalar(a) => {
                    grads[a.0] += &g;
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    grads[a.0] += &(&g * &y.mapv(|v| 1.0 - v * v));
                }
                Op::Abs(a) => {
                    let sign = self.value(*a).mapv(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    grads[a.0] += &(&g * &sign);
                }
                Op::MaskedSoftmaxCols(a, valid) => {
                    let y = &self.nodes[idx].value;
                    let (m, n) = y.dim();
                    let mut ga = Array2::zeros((m, n));
                    for j in 0..n {
                        let dot: f64 = (0..m)
                            .filter(|&i| valid[i])
                            .map(|i| g[(i, j)] * y[(i, j)])
                            .sum();
                        for i in 0..m {
                            if valid[i] {
                                ga[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                            }
                        }
                    }
                    grads[a.0] += &ga;
                }
                Op::LogSoftmaxCols(a) => {
                    let y = &self.nodes[idx].value;
                    let (m, n) = y.dim();
                    let mut ga = Array2::zeros((m, n));
                    for j in 0..n {
                        let gsum: f64 = (0..m).map(|i| g[(i, j)]).sum();
                        for i in 0..m {
                            ga[(i, j)] = g[(i, j)] - y[(i, j)].exp() * gsum;
                        }
                    }
                    grads[a.0] += &ga;
                }
                Op::LayerNormCols { x, gain, bias } => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain);
                    let (m, n) = xv.dim();
                    let mut gx = Array2::zeros((m, n));
                    let mut ggain = Array2::zeros((m, 1));
                    let mut gbias = Array2::zeros((m, 1));
                    for j in 0..n {
                        let col = xv.column(j);
                        let mean = col.sum() / m as f64;
                        let var =
                            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
                        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                        let xhat: Vec<f64> =
                            col.iter().map(|v| (v - mean) * inv_std).collect();
                        let dxhat: Vec<f64> =
                            (0..m).map(|i| g[(i, j)] * gv[(i, 0)]).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / m as f64;
                        let mean_dxhat_xhat = dxhat
                            .iter()
                            .zip(&xhat)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            / m as f64;
                        for i in 0..m {
                            gx[(i, j)] = inv_std
                                * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
                            ggain[(i, 0)] += g[(i, j)] * xhat[i];
                            gbias[(i, 0)] += g[(i, j)];
                        }
                    }
                    grads[x.0] += &gx;
                    grads[gain.0] += &ggain;
                    grads[bias.0] += &gbias;
                }
                Op::SliceRows(a, start, len) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(ndarray::s![*start..start + len, ..]).assign(&g);
                    grads[a.0] += &ga;
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let rows = self.value(*p).nrows();
                        let slice = g.slice(ndarray::s![offset..offset + rows, ..]);
                        grads[p.0] += &slice;
                        offset += rows;
                    }
                }
                Op::GatherCols(table, ids) => {
                    let mut gt = Array2::zeros(self.value(*table).dim());
                    for (j, &id) in ids.iter().enumerate() {
                        let mut col = gt.column_mut(id);
                        col += &g.column(j);
                    }
                    grads[table.0] += &gt;
                }
                Op::Pick(a, row, col) => {
                    grads[a.0][(*row, *col)] += g[(0, 0)];
                }
            }
        }
        grads
    }
}

/// Gradient bundle from one backward pass, indexed by node.
pub struct Gradients(Vec<Array2<f64>>);

impl Gradients {
    pub fn of(&self, id: NodeId) -> &Array2<f64> {
        &self.0[id.0]
    }
}

impl Graph {
    /// Like [`Graph::backward`] but wrapped for indexed access.
    pub fn gradients(&self, root: NodeId) -> Gradients {
        Gradients(self.backward(root))
    }
}
