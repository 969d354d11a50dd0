//! Tape-based reverse-mode differentiation.
//!
//! Every operation on a [`Graph`] evaluates eagerly and appends a node to the
//! tape. Because inputs always exist before their consumers, the tape order
//! is a topological order and [`Graph::backward`] simply walks it in reverse.
//!
//! Parameters are not copied onto the tape: a [`Graph`] borrows a
//! [`ParamStore`] and parameter nodes read from it directly. Their gradients
//! are accumulated into a caller-owned [`GradStore`], so several documents
//! can add into the same buffers before an optimizer step.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::value::{GradStore, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Pointwise operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Sigmoid,
    Relu,
    Scale(f64),
}

impl Elementwise {
    fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul | Elementwise::Div => 2,
            _ => 1,
        }
    }

    fn kind(self) -> OpKind {
        match self {
            Elementwise::Add => OpKind::Add,
            Elementwise::Sub => OpKind::Sub,
            Elementwise::Mul => OpKind::Mul,
            Elementwise::Div => OpKind::Div,
            Elementwise::Tanh => OpKind::Tanh,
            Elementwise::Sigmoid => OpKind::Sigmoid,
            Elementwise::Relu => OpKind::Relu,
            Elementwise::Scale(_) => OpKind::Scale,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    /// Maximum along an axis; the gradient goes to the first maximal element.
    Max,
}

/// Operation tag, used in error messages and for fault injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Param,
    MatMul,
    Softmax,
    Outer,
    Add,
    Sub,
    Mul,
    Div,
    Tanh,
    Sigmoid,
    Relu,
    Scale,
    Sum,
    Mean,
    Max,
    Embedding,
    CrossEntropy,
    SquaredError,
    Reshape,
    Slice,
    Narrow,
    Concat,
    AddBias,
    Unfold,
    PadRows,
}

impl OpKind {
    pub const ALL: [OpKind; 26] = [
        OpKind::Input,
        OpKind::Param,
        OpKind::MatMul,
        OpKind::Softmax,
        OpKind::Outer,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Tanh,
        OpKind::Sigmoid,
        OpKind::Relu,
        OpKind::Scale,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Max,
        OpKind::Embedding,
        OpKind::CrossEntropy,
        OpKind::SquaredError,
        OpKind::Reshape,
        OpKind::Slice,
        OpKind::Narrow,
        OpKind::Concat,
        OpKind::AddBias,
        OpKind::Unfold,
        OpKind::PadRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Param => "param",
            OpKind::MatMul => "matmul",
            OpKind::Softmax => "softmax",
            OpKind::Outer => "outer",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Relu => "relu",
            OpKind::Scale => "scale",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Max => "max",
            OpKind::Embedding => "embedding",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::SquaredError => "squared_error",
            OpKind::Reshape => "reshape",
            OpKind::Slice => "slice",
            OpKind::Narrow => "narrow",
            OpKind::Concat => "concat",
            OpKind::AddBias => "add_bias",
            OpKind::Unfold => "unfold",
            OpKind::PadRows => "pad_rows",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown op {s:?}")))
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Softmax(Var),
    Outer(Var, Var),
    Binary(Elementwise, Var, Var),
    Unary(Elementwise, Var),
    Reduce {
        kind: Reduction,
        x: Var,
        axis: usize,
        argmax: Vec<usize>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        dist: Var,
        target: usize,
    },
    SquaredError {
        pred: Var,
        target: f64,
    },
    Reshape(Var),
    Slice {
        x: Var,
        offset: usize,
    },
    Narrow {
        x: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    AddBias(Var, Var),
    Unfold {
        x: Var,
        width: usize,
    },
    PadRows(Var),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Param(_) => OpKind::Param,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Softmax(_) => OpKind::Softmax,
            Op::Outer(..) => OpKind::Outer,
            Op::Binary(k, ..) | Op::Unary(k, _) => k.kind(),
            Op::Reduce { kind, .. } => match kind {
                Reduction::Sum => OpKind::Sum,
                Reduction::Mean => OpKind::Mean,
                Reduction::Max => OpKind::Max,
            },
            Op::Embedding { .. } => OpKind::Embedding,
            Op::CrossEntropy { .. } => OpKind::CrossEntropy,
            Op::SquaredError { .. } => OpKind::SquaredError,
            Op::Reshape(_) => OpKind::Reshape,
            Op::Slice { .. } => OpKind::Slice,
            Op::Narrow { .. } => OpKind::Narrow,
            Op::Concat(_) => OpKind::Concat,
            Op::AddBias(..) => OpKind::AddBias,
            Op::Unfold { .. } => OpKind::Unfold,
            Op::PadRows(_) => OpKind::PadRows,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul(a, b) | Op::Outer(a, b) | Op::Binary(_, a, b) | Op::AddBias(a, b) => {
                vec![*a, *b]
            }
            Op::Softmax(x)
            | Op::Unary(_, x)
            | Op::Reshape(x)
            | Op::PadRows(x)
            | Op::Reduce { x, .. }
            | Op::Slice { x, .. }
            | Op::Narrow { x, .. }
            | Op::Unfold { x, .. } => vec![*x],
            Op::Embedding { table, .. } => vec![*table],
            Op::CrossEntropy { dist, .. } => vec![*dist],
            Op::SquaredError { pred, .. } => vec![*pred],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Tensor>,
    needs_grad: bool,
}

/// Gradients of input leaves created with `requires_grad = true`.
#[derive(Debug, Default)]
pub struct InputGrads {
    grads: HashMap<Var, Tensor>,
}

impl InputGrads {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }
}

/// A single forward computation recorded for differentiation.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    fault: Option<OpKind>,
}

/// Clamp applied to probabilities before taking logs in cross-entropy.
pub const LOG_CLAMP: f64 = 1e-12;

/// Gradient multiplier used when a fault is injected into an op's backward rule.
const FAULT_FACTOR: f64 = 1.5;

fn value_of<'a>(nodes: &'a [Node], params: &'a ParamStore, v: Var) -> &'a Tensor {
    let node = &nodes[v.0];
    match node.op {
        Op::Param(id) => params.get(id),
        _ => node
            .value
            .as_ref()
            .expect("non-parameter node without value"),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// Corrupts the backward rule of every op of `kind` on this graph.
    /// Only useful as a negative control for gradient checking.
    pub fn inject_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        value_of(&self.nodes, self.params, v)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op.kind() });
        }
        let needs_grad = op.inputs().iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn input(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: OpKind::Input });
        }
        self.nodes.push(Node {
            op: Op::Input,
            value: Some(value),
            needs_grad: requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.input(value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param_named(&mut self, name: &str) -> Result<Var> {
        let id = self
            .params
            .id(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))?;
        Ok(self.param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let (da, db) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = da[i * k + p];
                for (o, bv) in row.iter_mut().zip(&db[p * n..(p + 1) * n]) {
                    *o += aip * bv;
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        self.push(Op::MatMul(a, b), value)
    }

    /// Softmax over the last dimension, computed with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let last = t.shape().last().copied().unwrap_or(0);
        if t.rank() == 0 || last == 0 || t.numel() == 0 {
            return Err(Error::dim(
                "softmax",
                format!("cannot normalise shape {:?}", t.shape()),
            ));
        }
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(last) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                sum += *v;
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push(Op::Softmax(x), value)
    }

    /// Outer product of two rank-1 tensors.
    pub fn outer(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.rank() != 1 || tv.rank() != 1 {
            return Err(Error::Shape {
                op: "outer",
                lhs: tu.shape().to_vec(),
                rhs: tv.shape().to_vec(),
            });
        }
        let (p, q) = (tu.numel(), tv.numel());
        let mut out = Vec::with_capacity(p * q);
        for &a in tu.data() {
            out.extend(tv.data().iter().map(|b| a * b));
        }
        let value = Tensor::new(vec![p, q], out)?;
        self.push(Op::Outer(u, v), value)
    }

    pub fn elementwise(&mut self, kind: Elementwise, operands: &[Var]) -> Result<Var> {
        if operands.len() != kind.arity() {
            return Err(Error::dim(
                kind.kind().name(),
                format!("expected {} operands, got {}", kind.arity(), operands.len()),
            ));
        }
        if kind.arity() == 1 {
            return self.unary(kind, operands[0]);
        }
        let (a, b) = (operands[0], operands[1]);
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.numel() == 1 {
            ta.shape().to_vec()
        } else if ta.numel() == 1 {
            tb.shape().to_vec()
        } else {
            return Err(Error::Shape {
                op: kind.kind().name(),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        };
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let at = |i: usize| da[if da.len() == 1 { 0 } else { i }];
        let bt = |i: usize| db[if db.len() == 1 { 0 } else { i }];
        if kind == Elementwise::Div && db.contains(&0.0) {
            return Err(Error::Numeric {
                op: "div",
                msg: "division by zero".into(),
            });
        }
        let out: Vec<f64> = (0..n)
            .map(|i| match kind {
                Elementwise::Add => at(i) + bt(i),
                Elementwise::Sub => at(i) - bt(i),
                Elementwise::Mul => at(i) * bt(i),
                Elementwise::Div => at(i) / bt(i),
                _ => unreachable!(),
            })
            .collect();
        let value = Tensor::new(shape, out)?;
        self.push(Op::Binary(kind, a, b), value)
    }

    fn unary(&mut self, kind: Elementwise, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = t
            .data()
            .iter()
            .map(|&v| match kind {
                Elementwise::Tanh => v.tanh(),
                Elementwise::Sigmoid => sigmoid(v),
                Elementwise::Relu => v.max(0.0),
                Elementwise::Scale(c) => c * v,
                _ => unreachable!(),
            })
            .collect();
        let value = Tensor::new(t.shape().to_vec(), out)?;
        self.push(Op::Unary(kind, x), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Mul, &[a, b])
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(Elementwise::Div, &[a, b])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.elementwise(Elementwise::Tanh, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.elementwise(Elementwise::Sigmoid, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.elementwise(Elementwise::Relu, &[x])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.elementwise(Elementwise::Scale(factor), &[x])
    }

    /// Reduces `axis` away.
    pub fn reduce(&mut self, kind: Reduction, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let op = match kind {
            Reduction::Sum => "sum",
            Reduction::Mean => "mean",
            Reduction::Max => "max",
        };
        if axis >= t.rank() {
            return Err(Error::dim(
                op,
                format!("axis {axis} invalid for shape {:?}", t.shape()),
            ));
        }
        let shape = t.shape();
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        if len == 0 && kind != Reduction::Sum {
            return Err(Error::dim(op, "reduction over an empty axis"));
        }
        let data = t.data();
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        if kind == Reduction::Max {
            argmax = vec![0; outer * inner];
        }
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| data[(o * len + l) * inner + i];
                let slot = o * inner + i;
                match kind {
                    Reduction::Sum => out[slot] = (0..len).map(at).sum(),
                    Reduction::Mean => out[slot] = (0..len).map(at).sum::<f64>() / len as f64,
                    Reduction::Max => {
                        let mut best = 0;
                        for l in 1..len {
                            if at(l) > at(best) {
                                best = l;
                            }
                        }
                        argmax[slot] = best;
                        out[slot] = at(best);
                    }
                }
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape.remove(axis);
        let value = Tensor::new(out_shape, out)?;
        self.push(
            Op::Reduce {
                kind,
                x,
                axis,
                argmax,
            },
            value,
        )
    }

    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduction::Sum, x, axis)
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduction::Mean, x, axis)
    }

    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.reduce(Reduction::Max, x, axis)
    }

    /// Gathers rows of a `[V, e]` table.
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::dim(
                "embedding",
                format!("table must be rank 2, got {:?}", t.shape()),
            ));
        }
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    bound: vocab,
                });
            }
            out.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), dim], out)?;
        self.push(
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            value,
        )
    }

    /// `-ln(max(p[target], 1e-12))` for a probability vector `p`.
    pub fn cross_entropy(&mut self, dist: Var, target: usize) -> Result<Var> {
        let t = self.value(dist);
        if t.rank() != 1 {
            return Err(Error::dim(
                "cross_entropy",
                format!("expected a distribution vector, got {:?}", t.shape()),
            ));
        }
        if target >= t.numel() {
            return Err(Error::Index {
                op: "cross_entropy",
                index: target,
                bound: t.numel(),
            });
        }
        let total: f64 = t.data().iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Numeric {
                op: "cross_entropy",
                msg: format!("input sums to {total}, not 1"),
            });
        }
        let loss = -t.data()[target].max(LOG_CLAMP).ln();
        self.push(Op::CrossEntropy { dist, target }, Tensor::scalar(loss))
    }

    /// `(pred - target)^2` for a one-element `pred`.
    pub fn squared_error(&mut self, pred: Var, target: f64) -> Result<Var> {
        let p = self.value(pred).item().ok_or_else(|| {
            Error::dim(
                "squared_error",
                format!("prediction must be scalar, got {:?}", self.shape(pred)),
            )
        })?;
        let d = p - target;
        self.push(Op::SquaredError { pred, target }, Tensor::scalar(d * d))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.numel() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let value = t.clone().reshaped(shape.to_vec());
        self.push(Op::Reshape(x), value)
    }

    /// Rows `start..end` along the first axis, keeping the rank.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 || start > end || end > t.shape()[0] {
            return Err(Error::dim(
                "slice",
                format!("rows {start}..{end} out of range for {:?}", t.shape()),
            ));
        }
        let inner: usize = t.shape()[1..].iter().product();
        let mut shape = t.shape().to_vec();
        shape[0] = end - start;
        let data = t.data()[start * inner..end * inner].to_vec();
        let value = Tensor::new(shape, data)?;
        self.push(
            Op::Slice {
                x,
                offset: start * inner,
            },
            value,
        )
    }

    /// Index `i` along the first axis, dropping that axis.
    pub fn select(&mut self, x: Var, i: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() == 0 || i >= t.shape()[0] {
            return Err(Error::Index {
                op: "select",
                index: i,
                bound: t.shape().first().copied().unwrap_or(0),
            });
        }
        let inner: usize = t.shape()[1..].iter().product();
        let shape = t.shape()[1..].to_vec();
        let data = t.data()[i * inner..(i + 1) * inner].to_vec();
        let value = Tensor::new(shape, data)?;
        self.push(
            Op::Slice {
                x,
                offset: i * inner,
            },
            value,
        )
    }

    /// `len` entries of the last axis starting at `start`.
    pub fn narrow(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let last = t.shape().last().copied().unwrap_or(0);
        if t.rank() == 0 || start + len > last {
            return Err(Error::dim(
                "narrow",
                format!("{start}+{len} exceeds last dimension of {:?}", t.shape()),
            ));
        }
        let mut data = Vec::with_capacity(t.numel() / last.max(1) * len);
        for row in t.data().chunks(last) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let value = Tensor::new(shape, data)?;
        self.push(Op::Narrow { x, start }, value)
    }

    /// Concatenates rank-1 tensors.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(Error::dim(
                    "concat",
                    format!("expected vectors, got {:?}", t.shape()),
                ));
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::vector(data);
        self.push(Op::Concat(parts.to_vec()), value)
    }

    /// Stacks equal-length rank-1 tensors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::dim("concat", "cannot stack zero rows"));
        };
        let width = self.value(first).numel();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.numel() != width {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: vec![width],
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows.len(), width], data)?;
        self.push(Op::Concat(rows.to_vec()), value)
    }

    /// Adds a `[n]` bias to every row of a `[m, n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tx.rank() != 2 || tb.rank() != 1 || tx.shape()[1] != tb.numel() {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let n = tb.numel();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            for (o, b) in row.iter_mut().zip(tb.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(Op::AddBias(x, bias), value)
    }

    /// Sliding windows of `width` consecutive rows, each flattened:
    /// `[n, e] -> [n - width + 1, width * e]`.
    pub fn unfold(&mut self, x: Var, width: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 || width == 0 || t.shape()[0] < width {
            return Err(Error::dim(
                "unfold",
                format!("width {width} invalid for {:?}", t.shape()),
            ));
        }
        let (n, e) = (t.shape()[0], t.shape()[1]);
        let windows = n - width + 1;
        let mut data = Vec::with_capacity(windows * width * e);
        for s in 0..windows {
            data.extend_from_slice(&t.data()[s * e..(s + width) * e]);
        }
        let value = Tensor::new(vec![windows, width * e], data)?;
        self.push(Op::Unfold { x, width }, value)
    }

    /// Appends zero rows until the matrix has at least `min_rows` rows.
    pub fn pad_rows(&mut self, x: Var, min_rows: usize) -> Result<Var> {
        let t = self.value(x);
        if t.rank() != 2 {
            return Err(Error::dim(
                "pad_rows",
                format!("expected a matrix, got {:?}", t.shape()),
            ));
        }
        let (n, e) = (t.shape()[0], t.shape()[1]);
        let rows = n.max(min_rows);
        let mut data = t.data().to_vec();
        data.resize(rows * e, 0.0);
        let value = Tensor::new(vec![rows, e], data)?;
        self.push(Op::PadRows(x), value)
    }

    /// Propagates gradients from a one-element `loss` to every node that
    /// needs them. Parameter gradients are added into `grads`; gradients of
    /// input leaves created with `requires_grad` are returned.
    pub fn backward(&self, loss: Var, grads: &mut GradStore) -> Result<InputGrads> {
        if self.value(loss).numel() != 1 {
            return Err(Error::dim(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let nodes = self.nodes.as_slice();
        let params = self.params;
        let mut sink = Sink {
            nodes,
            node_grads: (0..nodes.len()).map(|_| None).collect(),
            params: grads,
        };
        sink.node_grads[loss.0] = Some(vec![1.0]);
        let mut inputs = InputGrads::default();

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(mut g) = sink.node_grads[id].take() else {
                continue;
            };
            if self.fault == Some(node.op.kind()) {
                g.iter_mut().for_each(|v| *v *= FAULT_FACTOR);
            }
            let val = |v: Var| value_of(nodes, params, v);
            let out = || node.value.as_ref().expect("op node without value");

            match &node.op {
                Op::Input => {
                    let t = Tensor::new(out().shape().to_vec(), g)?;
                    inputs.grads.insert(Var(id), t);
                }
                Op::Param(pid) => {
                    for (s, v) in sink.params.slot(*pid).iter_mut().zip(&g) {
                        *s += v;
                    }
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    if let Some(ga) = sink.slot(*a) {
                        for i in 0..m {
                            for p in 0..k {
                                let brow = &tb.data()[p * n..(p + 1) * n];
                                let grow = &g[i * n..(i + 1) * n];
                                ga[i * k + p] += dot(grow, brow);
                            }
                        }
                    }
                    if let Some(gb) = sink.slot(*b) {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let aip = ta.data()[i * k + p];
                                for (o, gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                    *o += aip * gv;
                                }
                            }
                        }
                    }
                }
                Op::Softmax(x) => {
                    let y = out();
                    let last = *y.shape().last().unwrap();
                    if let Some(gx) = sink.slot(*x) {
                        for ((gr, yr), gxr) in g
                            .chunks(last)
                            .zip(y.data().chunks(last))
                            .zip(gx.chunks_mut(last))
                        {
                            let s = dot(gr, yr);
                            for ((o, gv), yv) in gxr.iter_mut().zip(gr).zip(yr) {
                                *o += yv * (gv - s);
                            }
                        }
                    }
                }
                Op::Outer(u, v) => {
                    let (tu, tv) = (val(*u), val(*v));
                    let q = tv.numel();
                    if let Some(gu) = sink.slot(*u) {
                        for (i, o) in gu.iter_mut().enumerate() {
                            *o += dot(&g[i * q..(i + 1) * q], tv.data());
                        }
                    }
                    if let Some(gv) = sink.slot(*v) {
                        for (i, &uv) in tu.data().iter().enumerate() {
                            for (o, gg) in gv.iter_mut().zip(&g[i * q..(i + 1) * q]) {
                                *o += uv * gg;
                            }
                        }
                    }
                }
                Op::Binary(kind, a, b) => {
                    let (ta, tb) = (val(*a), val(*b));
                    let (da, db) = (ta.data(), tb.data());
                    let at = |i: usize| da[if da.len() == 1 { 0 } else { i }];
                    let bt = |i: usize| db[if db.len() == 1 { 0 } else { i }];
                    let bcast = |len: usize, i: usize| if len == 1 { 0 } else { i };
                    let la = da.len();
                    if let Some(ga) = sink.slot(*a) {
                        for (i, gv) in g.iter().enumerate() {
                            ga[bcast(la, i)] += match kind {
                                Elementwise::Add | Elementwise::Sub => *gv,
                                Elementwise::Mul => gv * bt(i),
                                Elementwise::Div => gv / bt(i),
                                _ => unreachable!(),
                            };
                        }
                    }
                    let lb = db.len();
                    if let Some(gb) = sink.slot(*b) {
                        for (i, gv) in g.iter().enumerate() {
                            gb[bcast(lb, i)] += match kind {
                                Elementwise::Add => *gv,
                                Elementwise::Sub => -gv,
                                Elementwise::Mul => gv * at(i),
                                Elementwise::Div => -gv * at(i) / (bt(i) * bt(i)),
                                _ => unreachable!(),
                            };
                        }
                    }
                }
                Op::Unary(kind, x) => {
                    let (tx, y) = (val(*x), out());
                    if let Some(gx) = sink.slot(*x) {
                        for i in 0..g.len() {
                            gx[i] += g[i]
                                * match kind {
                                    Elementwise::Tanh => 1.0 - y.data()[i] * y.data()[i],
                                    Elementwise::Sigmoid => y.data()[i] * (1.0 - y.data()[i]),
                                    Elementwise::Relu => {
                                        if tx.data()[i] > 0.0 {
                                            1.0
                                        } else {
                                            0.0
                                        }
                                    }
                                    Elementwise::Scale(c) => *c,
                                    _ => unreachable!(),
                                };
                        }
                    }
                }
                Op::Reduce {
                    kind,
                    x,
                    axis,
                    argmax,
                } => {
                    let shape = val(*x).shape().to_vec();
                    let outer: usize = shape[..*axis].iter().product();
                    let len = shape[*axis];
                    let inner: usize = shape[axis + 1..].iter().product();
                    if let Some(gx) = sink.slot(*x) {
                        for o in 0..outer {
                            for i in 0..inner {
                                let gv = g[o * inner + i];
                                match kind {
                                    Reduction::Sum | Reduction::Mean => {
                                        let gv = if *kind == Reduction::Mean {
                                            gv / len as f64
                                        } else {
                                            gv
                                        };
                                        for l in 0..len {
                                            gx[(o * len + l) * inner + i] += gv;
                                        }
                                    }
                                    Reduction::Max => {
                                        let l = argmax[o * inner + i];
                                        gx[(o * len + l) * inner + i] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let dim = val(*table).shape()[1];
                    if let Some(gt) = sink.slot(*table) {
                        for (r, &id) in ids.iter().enumerate() {
                            for (o, gv) in gt[id * dim..(id + 1) * dim]
                                .iter_mut()
                                .zip(&g[r * dim..(r + 1) * dim])
                            {
                                *o += gv;
                            }
                        }
                    }
                }
                Op::CrossEntropy { dist, target } => {
                    let p = val(*dist).data()[*target];
                    if let Some(gd) = sink.slot(*dist) {
                        if p > LOG_CLAMP {
                            gd[*target] -= g[0] / p;
                        }
                    }
                }
                Op::SquaredError { pred, target } => {
                    let p = val(*pred).data()[0];
                    if let Some(gp) = sink.slot(*pred) {
                        gp[0] += 2.0 * (p - target) * g[0];
                    }
                }
                Op::Reshape(x) => {
                    if let Some(gx) = sink.slot(*x) {
                        add_into(gx, &g);
                    }
                }
                Op::Slice { x, offset } => {
                    if let Some(gx) = sink.slot(*x) {
                        add_into(&mut gx[*offset..*offset + g.len()], &g);
                    }
                }
                Op::Narrow { x, start } => {
                    let last = *val(*x).shape().last().unwrap();
                    let len = *out().shape().last().unwrap();
                    if let Some(gx) = sink.slot(*x) {
                        for (gxr, gr) in gx.chunks_mut(last).zip(g.chunks(len.max(1))) {
                            add_into(&mut gxr[*start..*start + len], gr);
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).numel();
                        if let Some(gp) = sink.slot(p) {
                            add_into(gp, &g[offset..offset + n]);
                        }
                        offset += n;
                    }
                }
                Op::AddBias(x, b) => {
                    let n = val(*b).numel();
                    if let Some(gx) = sink.slot(*x) {
                        add_into(gx, &g);
                    }
                    if let Some(gb) = sink.slot(*b) {
                        for row in g.chunks(n.max(1)) {
                            add_into(gb, row);
                        }
                    }
                }
                Op::Unfold { x, width } => {
                    let e = val(*x).shape()[1];
                    let span = width * e;
                    if let Some(gx) = sink.slot(*x) {
                        for (s, gr) in g.chunks(span.max(1)).enumerate() {
                            add_into(&mut gx[s * e..s * e + span], gr);
                        }
                    }
                }
                Op::PadRows(x) => {
                    let n = val(*x).numel();
                    if let Some(gx) = sink.slot(*x) {
                        add_into(gx, &g[..n]);
                    }
                }
            }
        }
        Ok(inputs)
    }
}

struct Sink<'a> {
    nodes: &'a [Node],
    node_grads: Vec<Option<Vec<f64>>>,
    params: &'a mut GradStore,
}

impl Sink<'_> {
    fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return None;
        }
        if let Op::Param(pid) = node.op {
            return Some(self.params.slot(pid));
        }
        let len = node.value.as_ref().map_or(0, Tensor::numel);
        Some(self.node_grads[v.0].get_or_insert_with(|| vec![0.0; len]))
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

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
