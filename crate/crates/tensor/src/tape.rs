//! Operation tape and reverse-mode differentiation.
//!
//! Every forward operation appends a node to a [`Tape`]. Nodes are only ever
//! appended, so insertion order is a topological order of the graph and the
//! backward pass is a single reverse sweep that visits each node once.

use std::collections::HashMap;

use crate::conv::{col2im, im2col, ConvGeom};
use crate::error::{Result, TensorError};
use crate::gemm::{gemm, MatRef};
use crate::scalar::Scalar;
use crate::shape::{broadcast_shapes, numel, Plan};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Mean,
    /// Population variance (divides by the element count).
    Var,
    Sum,
    Max,
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Transpose { x: Var },
    Conv2d { input: Var, kernel: Var, geom: ConvGeom, cols: Option<Vec<T>> },
    Binary { op: BinaryOp, a: Var, b: Var },
    Unary { op: UnaryOp, x: Var },
    Affine { x: Var, scale: T },
    Reduce { op: ReduceOp, x: Var, mean: Vec<T>, argmax: Vec<usize> },
    GlobalMaxPool { x: Var, argmax: Vec<usize> },
    SoftmaxCe { logits: Var, probs: Vec<T>, targets: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { x: Var },
    Narrow { x: Var, axis: usize, start: usize },
    Gather { table: Var, ids: Vec<usize> },
    BatchNorm { x: Var, mean: Vec<T>, var: Vec<T>, inv_std: Vec<T> },
    NormalizeWith { x: Var, inv_std: Vec<T> },
    WhereRows { mask: Vec<bool>, a: Var, b: Var },
}

struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    requires_grad: bool,
    name: Option<String>,
}

/// Record of executed operations for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Var>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op, requires_grad, name: None });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Copies `t` onto the tape; differentiable iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    /// Binds a named parameter. Binding the same name twice returns the
    /// first node, so gradients from every use are summed in one place.
    pub fn param(&mut self, name: &str, t: &Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.leaf(t);
        self.nodes[v.0].name = Some(name.to_string());
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is consistent")
    }

    /// Batch mean and population variance saved by [`Tape::batch_norm`].
    pub fn batch_moments(&self, v: Var) -> Option<(&[T], &[T])> {
        match &self.node(v).op {
            Op::BatchNorm { mean, var, .. } => Some((mean, var)),
            _ => None,
        }
    }

    // ---- linear algebra -------------------------------------------------

    /// `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `[M,K] x [N,K]^T -> [M,N]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let op = if trans_b { "matmul_t" } else { "matmul" };
        if sa.len() != 2 || sb.len() != 2 {
            return Err(TensorError::Shape { op, lhs: sa, rhs: sb });
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(TensorError::Shape { op, lhs: sa, rhs: sb });
        }
        let mut out = vec![T::zero(); m * n];
        {
            let av = MatRef::row_major(self.value(a), m, k);
            let bv = if trans_b {
                MatRef::row_major(self.value(b), n, k).t()
            } else {
                MatRef::row_major(self.value(b), k, n)
            };
            gemm(T::one(), av, bv, T::zero(), &mut out);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul { a, b, trans_b }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Shape { op: "transpose", lhs: s, rhs: vec![] });
        }
        let out = transpose2(self.value(x), s[0], s[1]);
        let rg = self.rg(x);
        Ok(self.push(vec![s[1], s[0]], out, Op::Transpose { x }, rg))
    }

    /// Cross-correlation of `[N,C,H,W]` with `[O,C,kh,kw]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(input), self.shape(kernel), stride, pad)?;
        let (rows, ncols) = (geom.col_rows(), geom.col_cols());
        let save_cols = self.rg(kernel) && !geom.is_pointwise();
        let mut out = vec![T::zero(); geom.n * geom.out_plane()];
        let mut saved = if save_cols { vec![T::zero(); geom.n * rows * ncols] } else { Vec::new() };
        let mut scratch = if geom.is_pointwise() || save_cols { Vec::new() } else { vec![T::zero(); rows * ncols] };
        {
            let x = self.value(input);
            let kmat = MatRef::row_major(self.value(kernel), geom.o, rows);
            for s in 0..geom.n {
                let xs = &x[s * geom.in_plane()..(s + 1) * geom.in_plane()];
                let cols: &[T] = if geom.is_pointwise() {
                    xs
                } else {
                    let buf = if save_cols {
                        &mut saved[s * rows * ncols..(s + 1) * rows * ncols]
                    } else {
                        &mut scratch[..]
                    };
                    im2col(&geom, xs, buf);
                    buf
                };
                let dst = &mut out[s * geom.out_plane()..(s + 1) * geom.out_plane()];
                gemm(T::one(), kmat, MatRef::row_major(cols, rows, ncols), T::zero(), dst);
            }
        }
        let rg = self.rg(input) || self.rg(kernel);
        let cols = save_cols.then_some(saved);
        Ok(self.push(vec![geom.n, geom.o, geom.ho, geom.wo], out, Op::Conv2d { input, kernel, geom, cols }, rg))
    }

    // ---- element-wise ---------------------------------------------------

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let name = match op {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
        };
        let out_shape = broadcast_shapes(name, self.shape(a), self.shape(b))?;
        let plan = Plan::new(self.shape(a), self.shape(b), &out_shape);
        let mut out = vec![T::zero(); numel(&out_shape)];
        {
            let (x, y) = (self.value(a), self.value(b));
            match op {
                BinaryOp::Add => plan.for_each(|o, i, j| out[o] = x[i] + y[j]),
                BinaryOp::Sub => plan.for_each(|o, i, j| out[o] = x[i] - y[j]),
                BinaryOp::Mul => plan.for_each(|o, i, j| out[o] = x[i] * y[j]),
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out_shape, out, Op::Binary { op, a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Var {
        let out: Vec<T> = match op {
            UnaryOp::Relu => self.value(x).iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
            UnaryOp::Tanh => self.value(x).iter().map(|v| v.tanh()).collect(),
            UnaryOp::Sigmoid => self.value(x).iter().map(|&v| sigmoid(v)).collect(),
        };
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Unary { op, x }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Relu, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryOp::Sigmoid, x)
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let out = self.value(x).iter().map(|&v| scale * v + shift).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, Op::Affine { x, scale }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.affine(x, factor, T::zero())
    }

    // ---- reductions -----------------------------------------------------

    /// Reduces over `axes`, keeping them as extent-1 dimensions.
    pub fn reduce(&mut self, op: ReduceOp, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let domain = |msg: String| TensorError::Domain { op: "reduce", msg };
        if axes.is_empty() {
            return Err(domain("empty reduction axis set".into()));
        }
        let mut out_shape = shape.clone();
        for (i, &ax) in axes.iter().enumerate() {
            if ax >= shape.len() {
                return Err(TensorError::Index { op: "reduce", index: ax, bound: shape.len() });
            }
            if axes[..i].contains(&ax) {
                return Err(domain(format!("axis {ax} repeated")));
            }
            out_shape[ax] = 1;
        }
        let count = numel(&shape) / numel(&out_shape);
        let plan = Plan::new(&out_shape, &out_shape, &shape);
        let xv = self.value(x);
        let mut out = vec![T::zero(); numel(&out_shape)];
        let mut mean = Vec::new();
        let mut argmax = Vec::new();
        let inv = T::one() / T::from_f64(count as f64);
        match op {
            ReduceOp::Sum | ReduceOp::Mean => {
                plan.for_each(|i, r, _| out[r] += xv[i]);
                if op == ReduceOp::Mean {
                    out.iter_mut().for_each(|v| *v *= inv);
                }
            }
            ReduceOp::Var => {
                let mut m = vec![T::zero(); out.len()];
                plan.for_each(|i, r, _| m[r] += xv[i]);
                m.iter_mut().for_each(|v| *v *= inv);
                plan.for_each(|i, r, _| {
                    let d = xv[i] - m[r];
                    out[r] += d * d;
                });
                out.iter_mut().for_each(|v| *v *= inv);
                mean = m;
            }
            ReduceOp::Max => {
                let mut seen = vec![false; out.len()];
                argmax = vec![0; out.len()];
                plan.for_each(|i, r, _| {
                    if !seen[r] || xv[i] > out[r] {
                        seen[r] = true;
                        out[r] = xv[i];
                        argmax[r] = i;
                    }
                });
            }
        }
        let rg = self.rg(x);
        Ok(self.push(out_shape, out, Op::Reduce { op, x, mean, argmax }, rg))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        let r = self.reduce(ReduceOp::Sum, x, &axes)?;
        self.reshape(r, &[1])
    }

    /// `[N,C,H,W] -> [N,C]`, per-channel spatial maximum.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(TensorError::Shape { op: "global_max_pool", lhs: s, rhs: vec![] });
        }
        let plane = s[2] * s[3];
        let xv = self.value(x);
        let mut out = Vec::with_capacity(s[0] * s[1]);
        let mut argmax = Vec::with_capacity(s[0] * s[1]);
        for (p, chunk) in xv.chunks_exact(plane).enumerate() {
            let mut best = 0;
            for (i, &v) in chunk.iter().enumerate() {
                if v > chunk[best] {
                    best = i;
                }
            }
            out.push(chunk[best]);
            argmax.push(p * plane + best);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![s[0], s[1]], out, Op::GlobalMaxPool { x, argmax }, rg))
    }

    /// Mean over the batch of `-log softmax(logits)[target]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != targets.len() {
            return Err(TensorError::Shape { op: "softmax_cross_entropy", lhs: s, rhs: vec![targets.len()] });
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(TensorError::Index { op: "softmax_cross_entropy", index: bad, bound: k });
        }
        let lv = self.value(logits);
        let mut probs = vec![T::zero(); n * k];
        let mut loss = T::zero();
        for (row, (&t, p)) in lv.chunks_exact(k).zip(targets.iter().zip(probs.chunks_exact_mut(k))) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (pi, &v) in p.iter_mut().zip(row) {
                *pi = (v - max).exp();
                z += *pi;
            }
            p.iter_mut().for_each(|v| *v /= z);
            loss += z.ln() - (row[t] - max);
        }
        loss /= T::from_f64(n as f64);
        let rg = self.rg(logits);
        Ok(self.push(vec![1], vec![loss], Op::SoftmaxCe { logits, probs, targets: targets.to_vec() }, rg))
    }

    // ---- structural -----------------------------------------------------

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*inputs.first().ok_or_else(|| TensorError::Contract("concat of nothing".into()))?).to_vec();
        if axis >= first.len() {
            return Err(TensorError::Index { op: "concat", index: axis, bound: first.len() });
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == first.len()
                && s.iter().zip(&first).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(TensorError::Shape { op: "concat", lhs: first, rhs: s.to_vec() });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let mut out = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for &v in inputs {
                let chunk = numel(&self.shape(v)[axis..]);
                out.extend_from_slice(&self.value(v)[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = inputs.iter().any(|&v| self.rg(v));
        Ok(self.push(out_shape, out, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(x).len() {
            return Err(TensorError::Shape { op: "reshape", lhs: self.shape(x).to_vec(), rhs: shape.to_vec() });
        }
        let (value, rg) = (self.value(x).to_vec(), self.rg(x));
        Ok(self.push(shape.to_vec(), value, Op::Reshape { x }, rg))
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(TensorError::Index { op: "narrow", index: axis, bound: s.len() });
        }
        if len == 0 || start + len > s[axis] {
            return Err(TensorError::Index { op: "narrow", index: start + len, bound: s[axis] });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let xv = self.value(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * s[axis] * inner;
            out.extend_from_slice(&xv[base + start * inner..base + (start + len) * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(shape, out, Op::Narrow { x, axis, start }, rg))
    }

    /// Row lookup: `table[V,E]`, ids -> `[len(ids), E]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(TensorError::Shape { op: "gather_rows", lhs: s, rhs: vec![] });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= s[0]) {
            return Err(TensorError::Index { op: "gather_rows", index: bad, bound: s[0] });
        }
        let e = s[1];
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            out.extend_from_slice(&tv[i * e..(i + 1) * e]);
        }
        let rg = self.rg(table);
        Ok(self.push(vec![ids.len(), e], out, Op::Gather { table, ids: ids.to_vec() }, rg))
    }

    /// Row-wise select: row `i` from `a` where `mask[i]`, else from `b`.
    pub fn where_rows(&mut self, mask: &[bool], a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb || sa.is_empty() || sa[0] != mask.len() {
            return Err(TensorError::Shape { op: "where_rows", lhs: sa, rhs: sb });
        }
        let row = numel(&sa[1..]);
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(av.len());
        for (i, &m) in mask.iter().enumerate() {
            let src = if m { av } else { bv };
            out.extend_from_slice(&src[i * row..(i + 1) * row]);
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(sa, out, Op::WhereRows { mask: mask.to_vec(), a, b }, rg))
    }

    // ---- normalization --------------------------------------------------

    /// Normalizes `[N,C,...]` per channel by its batch mean and population
    /// variance over every axis except 1. No affine is applied.
    pub fn batch_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(TensorError::Shape { op: "batch_norm", lhs: s, rhs: vec![] });
        }
        let (n, c) = (s[0], s[1]);
        let plane: usize = s[2..].iter().product();
        let count = n * plane;
        if count < 2 {
            return Err(TensorError::Domain {
                op: "batch_norm",
                msg: format!("degenerate batch: {count} element per channel"),
            });
        }
        let xv = self.value(x);
        let inv_count = T::one() / T::from_f64(count as f64);
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * plane;
                mean[ch] += xv[base..base + plane].iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_count);
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * plane;
                let m = mean[ch];
                var[ch] += xv[base..base + plane].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v *= inv_count);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = normalize(xv, n, c, plane, &mean, &inv_std);
        let rg = self.rg(x);
        Ok(self.push(s, out, Op::BatchNorm { x, mean, var, inv_std }, rg))
    }

    /// Normalizes `[N,C,...]` with fixed per-channel statistics.
    pub fn normalize_with(&mut self, x: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 || mean.len() != s[1] || var.len() != s[1] {
            return Err(TensorError::Shape { op: "normalize_with", lhs: s, rhs: vec![mean.len(), var.len()] });
        }
        let plane: usize = s[2..].iter().product();
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = normalize(self.value(x), s[0], s[1], plane, mean, &inv_std);
        let rg = self.rg(x);
        Ok(self.push(s, out, Op::NormalizeWith { x, inv_std }, rg))
    }

    // ---- backward -------------------------------------------------------

    /// Consumes the tape and returns gradients of the scalar `loss` with
    /// respect to every differentiable leaf that it depends on.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(TensorError::Contract("backward on an empty tape".into()));
        }
        if self.node(loss).value.len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.node(loss).shape
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut result = Gradients { leaves: HashMap::new(), named: HashMap::new() };
        if !self.rg(loss) {
            return Ok(result);
        }
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                if let Some(name) = &node.name {
                    result.named.insert(name.clone(), g.clone());
                }
                result.leaves.insert(i, g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        Ok(result)
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let mut send = |v: Var, contribution: Vec<T>| {
            debug_assert_eq!(contribution.len(), self.node(v).value.len());
            match &mut grads[v.0] {
                Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, &c)| *a += c),
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            &Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = node.shape[1];
                let gm = MatRef::row_major(g, m, n);
                if self.rg(a) {
                    let mut ga = vec![T::zero(); m * k];
                    let bm = if trans_b {
                        MatRef::row_major(self.value(b), n, k)
                    } else {
                        MatRef::row_major(self.value(b), k, n).t()
                    };
                    gemm(T::one(), gm, bm, T::zero(), &mut ga);
                    send(a, ga);
                }
                if self.rg(b) {
                    let mut gb = vec![T::zero(); k * n];
                    let am = MatRef::row_major(self.value(a), m, k);
                    if trans_b {
                        gemm(T::one(), gm.t(), am, T::zero(), &mut gb);
                    } else {
                        gemm(T::one(), am.t(), gm, T::zero(), &mut gb);
                    }
                    send(b, gb);
                }
            }
            &Op::Transpose { x } => {
                send(x, transpose2(g, node.shape[0], node.shape[1]));
            }
            Op::Conv2d { input, kernel, geom, cols } => {
                let (rows, ncols) = (geom.col_rows(), geom.col_cols());
                let kv = self.value(*kernel);
                if self.rg(*kernel) {
                    let mut gk = vec![T::zero(); geom.o * rows];
                    let xv = self.value(*input);
                    for s in 0..geom.n {
                        let gs = MatRef::row_major(&g[s * geom.out_plane()..(s + 1) * geom.out_plane()], geom.o, ncols);
                        let cs: &[T] = match cols {
                            Some(c) => &c[s * rows * ncols..(s + 1) * rows * ncols],
                            None => &xv[s * geom.in_plane()..(s + 1) * geom.in_plane()],
                        };
                        gemm(T::one(), gs, MatRef::row_major(cs, rows, ncols).t(), T::one(), &mut gk);
                    }
                    send(*kernel, gk);
                }
                if self.rg(*input) {
                    let mut gx = vec![T::zero(); geom.n * geom.in_plane()];
                    let mut gcols = vec![T::zero(); rows * ncols];
                    let kt = MatRef::row_major(kv, geom.o, rows).t();
                    for s in 0..geom.n {
                        let gs = MatRef::row_major(&g[s * geom.out_plane()..(s + 1) * geom.out_plane()], geom.o, ncols);
                        let dst = &mut gx[s * geom.in_plane()..(s + 1) * geom.in_plane()];
                        if geom.is_pointwise() {
                            gemm(T::one(), kt, gs, T::zero(), dst);
                        } else {
                            gemm(T::one(), kt, gs, T::zero(), &mut gcols);
                            col2im(geom, &gcols, dst);
                        }
                    }
                    send(*input, gx);
                }
            }
            &Op::Binary { op, a, b } => {
                let plan = Plan::new(self.shape(a), self.shape(b), &node.shape);
                let (av, bv) = (self.value(a), self.value(b));
                if self.rg(a) {
                    let mut ga = vec![T::zero(); av.len()];
                    match op {
                        BinaryOp::Add | BinaryOp::Sub => plan.for_each(|o, i, _| ga[i] += g[o]),
                        BinaryOp::Mul => plan.for_each(|o, i, j| ga[i] += g[o] * bv[j]),
                    }
                    send(a, ga);
                }
                if self.rg(b) {
                    let mut gb = vec![T::zero(); bv.len()];
                    match op {
                        BinaryOp::Add => plan.for_each(|o, _, j| gb[j] += g[o]),
                        BinaryOp::Sub => plan.for_each(|o, _, j| gb[j] -= g[o]),
                        BinaryOp::Mul => plan.for_each(|o, i, j| gb[j] += g[o] * av[i]),
                    }
                    send(b, gb);
                }
            }
            &Op::Unary { op, x } => {
                let y = &node.value;
                let gx: Vec<T> = match op {
                    UnaryOp::Relu => g
                        .iter()
                        .zip(self.value(x))
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect(),
                    UnaryOp::Tanh => g.iter().zip(y).map(|(&gi, &yi)| gi * (T::one() - yi * yi)).collect(),
                    UnaryOp::Sigmoid => g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (T::one() - yi)).collect(),
                };
                send(x, gx);
            }
            &Op::Affine { x, scale } => {
                send(x, g.iter().map(|&gi| gi * scale).collect());
            }
            Op::Reduce { op, x, mean, argmax } => {
                let xs = self.shape(*x);
                let xv = self.value(*x);
                let mut gx = vec![T::zero(); xv.len()];
                let count = T::from_f64((xv.len() / node.value.len()) as f64);
                let plan = Plan::new(&node.shape, &node.shape, xs);
                match op {
                    ReduceOp::Sum => plan.for_each(|i, r, _| gx[i] = g[r]),
                    ReduceOp::Mean => plan.for_each(|i, r, _| gx[i] = g[r] / count),
                    ReduceOp::Var => {
                        let two = T::from_f64(2.0);
                        plan.for_each(|i, r, _| gx[i] = g[r] * two * (xv[i] - mean[r]) / count)
                    }
                    ReduceOp::Max => {
                        for (r, &i) in argmax.iter().enumerate() {
                            gx[i] += g[r];
                        }
                    }
                }
                send(*x, gx);
            }
            Op::GlobalMaxPool { x, argmax } => {
                let mut gx = vec![T::zero(); self.value(*x).len()];
                for (r, &i) in argmax.iter().enumerate() {
                    gx[i] += g[r];
                }
                send(*x, gx);
            }
            Op::SoftmaxCe { logits, probs, targets } => {
                let k = self.shape(*logits)[1];
                let scale = g[0] / T::from_f64(targets.len() as f64);
                let mut gl: Vec<T> = probs.iter().map(|&p| p * scale).collect();
                for (row, &t) in targets.iter().enumerate() {
                    gl[row * k + t] -= scale;
                }
                send(*logits, gl);
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.shape[..*axis].iter().product();
                let mut parts: Vec<Vec<T>> = inputs.iter().map(|&v| Vec::with_capacity(self.value(v).len())).collect();
                let mut offset = 0;
                for _ in 0..outer {
                    for (p, &v) in parts.iter_mut().zip(inputs) {
                        let chunk = numel(&self.shape(v)[*axis..]);
                        p.extend_from_slice(&g[offset..offset + chunk]);
                        offset += chunk;
                    }
                }
                for (p, &v) in parts.into_iter().zip(inputs) {
                    if self.rg(v) {
                        send(v, p);
                    }
                }
            }
            &Op::Reshape { x } => send(x, g.to_vec()),
            &Op::Narrow { x, axis, start } => {
                let s = self.shape(x);
                let len = node.shape[axis];
                let outer: usize = s[..axis].iter().product();
                let inner: usize = s[axis + 1..].iter().product();
                let mut gx = vec![T::zero(); self.value(x).len()];
                for o in 0..outer {
                    let base = o * s[axis] * inner + start * inner;
                    gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                send(x, gx);
            }
            Op::Gather { table, ids } => {
                let e = self.shape(*table)[1];
                let mut gt = vec![T::zero(); self.value(*table).len()];
                for (row, &id) in ids.iter().enumerate() {
                    for (d, &gv) in gt[id * e..(id + 1) * e].iter_mut().zip(&g[row * e..(row + 1) * e]) {
                        *d += gv;
                    }
                }
                send(*table, gt);
            }
            Op::BatchNorm { x, inv_std, .. } => {
                let s = &node.shape;
                let (n, c) = (s[0], s[1]);
                let plane: usize = s[2..].iter().product();
                let xhat = &node.value;
                let mut sum_g = vec![T::zero(); c];
                let mut sum_gx = vec![T::zero(); c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        for p in base..base + plane {
                            sum_g[ch] += g[p];
                            sum_gx[ch] += g[p] * xhat[p];
                        }
                    }
                }
                let count = T::from_f64((n * plane) as f64);
                let mut gx = vec![T::zero(); g.len()];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * plane;
                        let k = inv_std[ch] / count;
                        for p in base..base + plane {
                            gx[p] = k * (count * g[p] - sum_g[ch] - xhat[p] * sum_gx[ch]);
                        }
                    }
                }
                send(*x, gx);
            }
            Op::NormalizeWith { x, inv_std } => {
                let c = node.shape[1];
                let plane: usize = node.shape[2..].iter().product();
                let gx = g
                    .chunks_exact(plane)
                    .enumerate()
                    .flat_map(|(p, chunk)| {
                        let k = inv_std[p % c];
                        chunk.iter().map(move |&v| v * k)
                    })
                    .collect();
                send(*x, gx);
            }
            Op::WhereRows { mask, a, b } => {
                let row = g.len() / mask.len();
                let mut ga = vec![T::zero(); g.len()];
                let mut gb = vec![T::zero(); g.len()];
                for (i, &m) in mask.iter().enumerate() {
                    let dst = if m { &mut ga } else { &mut gb };
                    dst[i * row..(i + 1) * row].copy_from_slice(&g[i * row..(i + 1) * row]);
                }
                if self.rg(*a) {
                    send(*a, ga);
                }
                if self.rg(*b) {
                    send(*b, gb);
                }
            }
        }
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    leaves: HashMap<usize, Vec<T>>,
    named: HashMap<String, Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.leaves.get(&v.0).map(Vec::as_slice)
    }

    pub fn named(&self, name: &str) -> Option<&[T]> {
        self.named.get(name).map(Vec::as_slice)
    }

    pub fn take_named(&mut self, name: &str) -> Option<Vec<T>> {
        self.named.remove(name)
    }

    /// Stores the gradient for `name` into `t.grad`, zero-filled when the
    /// parameter did not influence the loss.
    pub fn write_into(&mut self, name: &str, t: &mut Tensor<T>) {
        let len = t.len();
        t.grad = Some(self.take_named(name).unwrap_or_else(|| vec![T::zero(); len]));
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn transpose2<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

fn normalize<T: Scalar>(x: &[T], n: usize, c: usize, plane: usize, mean: &[T], inv_std: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            let (m, k) = (mean[ch], inv_std[ch]);
            out.extend(x[base..base + plane].iter().map(|&v| (v - m) * k));
        }
    }
    out
}
