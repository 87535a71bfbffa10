//! Dense tensors and a reverse-mode differentiation tape.
//!
//! Every learnable computation in the toolkit is expressed through [`Tape`]
//! operations over [`Tensor`] values. The tape records each executed
//! operation together with its inputs; [`Tape::backward`] replays the record
//! in reverse and accumulates gradients additively into every tensor that
//! requires them.
//!
//! Element precision is generic: `f32` for training speed, `f64` for
//! gradient verification. Reductions run in a fixed sequential order so
//! forward results are bitwise reproducible.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// Element width marker used by checkpoints and runtime dispatch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

/// Scalar element of a tensor. Implemented for `f32` and `f64`.
pub trait Real:
    num_traits::Float + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn parse_str(s: &str) -> Option<Self>;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }

    fn parse_str(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }

    fn parse_str(s: &str) -> Option<Self> {
        s.parse().ok()
    }
}

/// Dense multi-dimensional value in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    /// Builds a tensor, checking that the shape fits the data exactly.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || numel != data.len() {
            return Err(Error::InvalidParameter(format!(
                "tensor shape {:?} does not fit {} elements",
                shape,
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert!(numel > 0, "tensor shape must have positive extents");
        Self {
            shape,
            data: vec![T::zero(); numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(x: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![x],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn vector(data: Vec<T>) -> Self {
        assert!(!data.is_empty(), "vector tensor must be non-empty");
        Self {
            shape: vec![data.len()],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Fills a fresh tensor with independent draws uniform in `[lo, hi)`.
    pub fn uniform(shape: Vec<usize>, lo: f64, hi: f64, rng: &mut (impl Rng + ?Sized)) -> Self {
        let numel: usize = shape.iter().product();
        assert!(numel > 0, "tensor shape must have positive extents");
        let data = (0..numel)
            .map(|_| T::from_f64(lo + rng.gen::<f64>() * (hi - lo)))
            .collect();
        Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        }
    }

    pub fn with_requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.data.len());
        let grad = self
            .grad
            .get_or_insert_with(|| vec![T::zero(); self.data.len()]);
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst = *dst + *src;
        }
    }

    /// Clears the gradient buffer. Required between optimizer steps.
    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Copy of the tensor with no gradient buffer attached.
    pub fn detached(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.clone(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    /// Matrix element accessor; the tensor must be two-dimensional.
    pub fn at2(&self, row: usize, col: usize) -> T {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValueId(usize);

/// Backward rule for an operation the tape does not know natively.
///
/// `backward` receives the op's inputs, its recorded output, and the
/// incoming gradient, and returns one gradient buffer per input (aligned
/// with the input order; an empty buffer means no gradient flows there).
pub trait BackwardRule<T: Real> {
    fn name(&self) -> &'static str;
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, out_grad: &[T]) -> Vec<Vec<T>>;
}

enum Op<T: Real> {
    Leaf,
    MatMul { a: ValueId, b: ValueId },
    MatVec { m: ValueId, x: ValueId },
    Add { a: ValueId, b: ValueId },
    Mul { a: ValueId, b: ValueId },
    Sigmoid { x: ValueId },
    Tanh { x: ValueId },
    Concat { parts: Vec<ValueId> },
    StackRows { rows: Vec<ValueId> },
    Row { src: ValueId, index: usize },
    Sum { x: ValueId },
    Scale { x: ValueId, factor: T },
    Dropout { x: ValueId, mask: Vec<T> },
    Custom {
        inputs: Vec<ValueId>,
        rule: Box<dyn BackwardRule<T>>,
    },
}

struct Node<T: Real> {
    tensor: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of executed operations for one reverse sweep.
///
/// Operations append nodes in execution order, so every node's inputs
/// precede it. A tape is single-use: `backward` may run once.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a pre-built tensor as a leaf.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> ValueId {
        self.push(tensor, Op::Leaf)
    }

    /// Records a constant vector leaf that never receives gradients.
    pub fn constant(&mut self, data: Vec<T>) -> ValueId {
        self.leaf(Tensor::vector(data))
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id.0].tensor
    }

    pub fn grad(&self, id: ValueId) -> Option<&[T]> {
        self.nodes[id.0].tensor.grad()
    }

    fn push(&mut self, tensor: Tensor<T>, op: Op<T>) -> ValueId {
        self.nodes.push(Node { tensor, op });
        ValueId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, data: Vec<T>, shape: Vec<usize>, op: Op<T>, name: &'static str) -> Result<ValueId> {
        check_finite(&data, name)?;
        let requires = self.op_requires_grad(&op);
        let tensor = Tensor {
            shape,
            data,
            requires_grad: requires,
            grad: None,
        };
        Ok(self.push(tensor, op))
    }

    fn op_requires_grad(&self, op: &Op<T>) -> bool {
        let req = |id: &ValueId| self.nodes[id.0].tensor.requires_grad;
        match op {
            Op::Leaf => false,
            Op::MatMul { a, b } | Op::Add { a, b } | Op::Mul { a, b } => req(a) || req(b),
            Op::MatVec { m, x } => req(m) || req(x),
            Op::Sigmoid { x } | Op::Tanh { x } | Op::Sum { x } | Op::Scale { x, .. } => req(x),
            Op::Dropout { x, .. } => req(x),
            Op::Row { src, .. } => req(src),
            Op::Concat { parts } | Op::StackRows { rows: parts } => parts.iter().any(req),
            Op::Custom { inputs, .. } => inputs.iter().any(req),
        }
    }

    /// `[m,k] x [k,n] -> [m,n]` matrix product.
    pub fn matmul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ash, bsh) = (self.value(a).shape(), self.value(b).shape());
        if ash.len() != 2 || bsh.len() != 2 || ash[1] != bsh[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let data = matmul_data(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push_op(data, vec![m, n], Op::MatMul { a, b }, "matmul")
    }

    /// `[m,k] x [k] -> [m]` matrix-vector product.
    pub fn matvec(&mut self, m: ValueId, x: ValueId) -> Result<ValueId> {
        let (msh, xsh) = (self.value(m).shape(), self.value(x).shape());
        if msh.len() != 2 || xsh.len() != 1 || msh[1] != xsh[0] {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                lhs: msh.to_vec(),
                rhs: xsh.to_vec(),
            });
        }
        let rows = msh[0];
        let cols = msh[1];
        let md = self.value(m).data();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); rows];
        for (r, dst) in out.iter_mut().enumerate() {
            let mut acc = T::zero();
            for c in 0..cols {
                acc = acc + md[r * cols + c] * xd[c];
            }
            *dst = acc;
        }
        self.push_op(out, vec![rows], Op::MatVec { m, x }, "matvec")
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ash, bsh) = (self.value(a).shape(), self.value(b).shape());
        if ash != bsh {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let shape = ash.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        self.push_op(data, shape, Op::Add { a, b }, "add")
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let (ash, bsh) = (self.value(a).shape(), self.value(b).shape());
        if ash != bsh {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: ash.to_vec(),
                rhs: bsh.to_vec(),
            });
        }
        let shape = ash.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push_op(data, shape, Op::Mul { a, b }, "mul")
    }

    pub fn sigmoid(&mut self, x: ValueId) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| T::one() / (T::one() + (-v).exp()))
            .collect();
        self.push_op(data, shape, Op::Sigmoid { x }, "sigmoid")
    }

    pub fn tanh(&mut self, x: ValueId) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let data = self.value(x).data().iter().map(|&v| v.tanh()).collect();
        self.push_op(data, shape, Op::Tanh { x }, "tanh")
    }

    /// Concatenation along the last axis. Inputs must agree on all other axes.
    pub fn concat(&mut self, parts: &[ValueId]) -> Result<ValueId> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat"));
        }
        let lead = self.value(parts[0]).shape().to_vec();
        let mut last_total = 0usize;
        for &p in parts {
            let sh = self.value(p).shape();
            if sh.len() != lead.len() || sh[..sh.len() - 1] != lead[..lead.len() - 1] {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: lead.clone(),
                    rhs: sh.to_vec(),
                });
            }
            last_total += sh[sh.len() - 1];
        }
        let mut shape = lead.clone();
        *shape.last_mut().unwrap() = last_total;
        let outer: usize = lead[..lead.len() - 1].iter().product();
        let mut data = Vec::with_capacity(outer * last_total);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let w = *t.shape().last().unwrap();
                data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        self.push_op(
            data,
            shape,
            Op::Concat {
                parts: parts.to_vec(),
            },
            "concat",
        )
    }

    /// Stacks `n` equal-length vectors into an `[n, d]` matrix.
    pub fn stack_rows(&mut self, rows: &[ValueId]) -> Result<ValueId> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("stack_rows"));
        }
        let d = {
            let sh = self.value(rows[0]).shape();
            if sh.len() != 1 {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: sh.to_vec(),
                    rhs: vec![],
                });
            }
            sh[0]
        };
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let sh = self.value(r).shape();
            if sh != [d] {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: vec![d],
                    rhs: sh.to_vec(),
                });
            }
            data.extend_from_slice(self.value(r).data());
        }
        self.push_op(
            data,
            vec![rows.len(), d],
            Op::StackRows {
                rows: rows.to_vec(),
            },
            "stack_rows",
        )
    }

    /// Selects one row of a matrix; gradients scatter back into that row.
    pub fn row(&mut self, src: ValueId, index: usize) -> Result<ValueId> {
        let sh = self.value(src).shape();
        if sh.len() != 2 || index >= sh[0] {
            return Err(Error::InvalidParameter(format!(
                "row {} out of range for shape {:?}",
                index, sh
            )));
        }
        let cols = sh[1];
        let data = self.value(src).data()[index * cols..(index + 1) * cols].to_vec();
        self.push_op(data, vec![cols], Op::Row { src, index }, "row")
    }

    /// Sums all elements into a scalar.
    pub fn sum(&mut self, x: ValueId) -> Result<ValueId> {
        let mut acc = T::zero();
        for &v in self.value(x).data() {
            acc = acc + v;
        }
        self.push_op(vec![acc], vec![1], Op::Sum { x }, "sum")
    }

    /// Multiplies every element by a constant factor.
    pub fn scale(&mut self, x: ValueId, factor: T) -> Result<ValueId> {
        let shape = self.value(x).shape().to_vec();
        let data = self.value(x).data().iter().map(|&v| v * factor).collect();
        self.push_op(data, shape, Op::Scale { x, factor }, "scale")
    }

    /// Inverted dropout: zeroes each element with probability `rate` and
    /// scales survivors by `1/(1-rate)` in training mode; the identity
    /// otherwise.
    pub fn dropout(
        &mut self,
        x: ValueId,
        rate: f64,
        training: bool,
        rng: &mut impl Rng,
    ) -> Result<ValueId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate {} must lie in [0, 1)",
                rate
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep_scale = T::from_f64(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(x).numel())
            .map(|_| {
                if rng.gen::<f64>() < rate {
                    T::zero()
                } else {
                    keep_scale
                }
            })
            .collect();
        let shape = self.value(x).shape().to_vec();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        self.push_op(data, shape, Op::Dropout { x, mask }, "dropout")
    }

    /// Records an operation with a caller-supplied backward rule.
    ///
    /// The forward value is computed by the caller; the rule runs during the
    /// reverse sweep.
    pub fn custom(
        &mut self,
        inputs: Vec<ValueId>,
        output: Tensor<T>,
        rule: Box<dyn BackwardRule<T>>,
    ) -> Result<ValueId> {
        check_finite(output.data(), rule.name())?;
        let op = Op::Custom { inputs, rule };
        let requires = self.op_requires_grad(&op);
        let tensor = output.with_requires_grad(requires);
        Ok(self.push(tensor, op))
    }

    /// Runs the reverse sweep from a scalar loss.
    ///
    /// Gradients accumulate additively into every tensor reachable from the
    /// loss whose `requires_grad` flag is set. A second call on the same
    /// tape is rejected.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        let lt = &self.nodes[loss.0].tensor;
        if lt.numel() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        self.backward_done = true;
        self.nodes[loss.0].tensor.accumulate_grad(&[T::one()]);
        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].tensor.requires_grad && i != loss.0 {
                continue;
            }
            if self.nodes[i].tensor.grad().is_none() {
                continue;
            }
            let contributions = self.local_grads(i);
            for (idx, g) in contributions {
                if self.nodes[idx].tensor.requires_grad {
                    self.nodes[idx].tensor.accumulate_grad(&g);
                }
            }
        }
        Ok(())
    }

    /// Chain-rule contributions of node `i` to each of its inputs.
    fn local_grads(&self, i: usize) -> Vec<(usize, Vec<T>)> {
        let node = &self.nodes[i];
        let og = node.tensor.grad().expect("node has a gradient");
        let val = |id: ValueId| &self.nodes[id.0].tensor;
        let wants = |id: ValueId| self.nodes[id.0].tensor.requires_grad;
        match &node.op {
            Op::Leaf => vec![],
            Op::MatMul { a, b } => {
                let (at, bt) = (val(*a), val(*b));
                let (m, k) = (at.shape()[0], at.shape()[1]);
                let n = bt.shape()[1];
                let mut out = Vec::new();
                if wants(*a) {
                    // dA = dC . B^T
                    let mut da = vec![T::zero(); m * k];
                    for r in 0..m {
                        for c in 0..k {
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc = acc + og[r * n + j] * bt.data()[c * n + j];
                            }
                            da[r * k + c] = acc;
                        }
                    }
                    out.push((a.0, da));
                }
                if wants(*b) {
                    // dB = A^T . dC
                    let mut db = vec![T::zero(); k * n];
                    for r in 0..k {
                        for c in 0..n {
                            let mut acc = T::zero();
                            for j in 0..m {
                                acc = acc + at.data()[j * k + r] * og[j * n + c];
                            }
                            db[r * n + c] = acc;
                        }
                    }
                    out.push((b.0, db));
                }
                out
            }
            Op::MatVec { m, x } => {
                let (mt, xt) = (val(*m), val(*x));
                let (rows, cols) = (mt.shape()[0], mt.shape()[1]);
                let mut out = Vec::new();
                if wants(*m) {
                    // dM = dy (outer) x
                    let mut dm = vec![T::zero(); rows * cols];
                    for (r, &g) in og.iter().enumerate() {
                        for (c, &xv) in xt.data().iter().enumerate() {
                            dm[r * cols + c] = g * xv;
                        }
                    }
                    out.push((m.0, dm));
                }
                if wants(*x) {
                    // dx = M^T . dy
                    let mut dx = vec![T::zero(); cols];
                    for (c, dst) in dx.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (r, &g) in og.iter().enumerate() {
                            acc = acc + mt.data()[r * cols + c] * g;
                        }
                        *dst = acc;
                    }
                    out.push((x.0, dx));
                }
                out
            }
            Op::Add { a, b } => {
                let mut out = Vec::new();
                if wants(*a) {
                    out.push((a.0, og.to_vec()));
                }
                if wants(*b) {
                    out.push((b.0, og.to_vec()));
                }
                out
            }
            Op::Mul { a, b } => {
                let mut out = Vec::new();
                if wants(*a) {
                    let da = og.iter().zip(val(*b).data()).map(|(&g, &v)| g * v).collect();
                    out.push((a.0, da));
                }
                if wants(*b) {
                    let db = og.iter().zip(val(*a).data()).map(|(&g, &v)| g * v).collect();
                    out.push((b.0, db));
                }
                out
            }
            Op::Sigmoid { x } => {
                if !wants(*x) {
                    return vec![];
                }
                let dg = og
                    .iter()
                    .zip(node.tensor.data())
                    .map(|(&g, &s)| g * s * (T::one() - s))
                    .collect();
                vec![(x.0, dg)]
            }
            Op::Tanh { x } => {
                if !wants(*x) {
                    return vec![];
                }
                let dg = og
                    .iter()
                    .zip(node.tensor.data())
                    .map(|(&g, &t)| g * (T::one() - t * t))
                    .collect();
                vec![(x.0, dg)]
            }
            Op::Concat { parts } => {
                let last = *node.tensor.shape().last().unwrap();
                let outer = node.tensor.numel() / last;
                let mut out = Vec::new();
                let mut offset = 0usize;
                for &p in parts {
                    let w = *val(p).shape().last().unwrap();
                    if wants(p) {
                        let mut dg = vec![T::zero(); val(p).numel()];
                        for o in 0..outer {
                            let src = &og[o * last + offset..o * last + offset + w];
                            dg[o * w..(o + 1) * w].copy_from_slice(src);
                        }
                        out.push((p.0, dg));
                    }
                    offset += w;
                }
                out
            }
            Op::StackRows { rows } => {
                let d = node.tensor.shape()[1];
                let mut out = Vec::new();
                for (r, &id) in rows.iter().enumerate() {
                    if wants(id) {
                        out.push((id.0, og[r * d..(r + 1) * d].to_vec()));
                    }
                }
                out
            }
            Op::Row { src, index } => {
                if !wants(*src) {
                    return vec![];
                }
                let cols = val(*src).shape()[1];
                let mut dg = vec![T::zero(); val(*src).numel()];
                dg[index * cols..(index + 1) * cols].copy_from_slice(og);
                vec![(src.0, dg)]
            }
            Op::Sum { x } => {
                if !wants(*x) {
                    return vec![];
                }
                vec![(x.0, vec![og[0]; val(*x).numel()])]
            }
            Op::Scale { x, factor } => {
                if !wants(*x) {
                    return vec![];
                }
                vec![(x.0, og.iter().map(|&g| g * *factor).collect())]
            }
            Op::Dropout { x, mask } => {
                if !wants(*x) {
                    return vec![];
                }
                let dg = og.iter().zip(mask).map(|(&g, &m)| g * m).collect();
                vec![(x.0, dg)]
            }
            Op::Custom { inputs, rule } => {
                let refs: Vec<&Tensor<T>> = inputs.iter().map(|&id| val(id)).collect();
                let grads = rule.backward(&refs, &node.tensor, og);
                debug_assert_eq!(grads.len(), inputs.len());
                inputs
                    .iter()
                    .zip(grads)
                    .filter(|(id, g)| wants(**id) && !g.is_empty())
                    .map(|(id, g)| (id.0, g))
                    .collect()
            }
        }
    }
}

fn matmul_data<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for r in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for c in 0..k {
                acc = acc + a[r * k + c] * b[c * n + j];
            }
            out[r * n + j] = acc;
        }
    }
    out
}

fn check_finite<T: Real>(data: &[T], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}
