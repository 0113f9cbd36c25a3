use std::sync::Arc;

use super::Tensor;
use crate::error::{Error, Result};

/// Index of a node inside its [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
    /// Elementwise minimum; on ties the first operand is selected.
    Min,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Softplus,
    Sqrt,
    Square,
    Abs,
}

/// Constant sparse linear map: output `i` is `sum_k taps[k] * x[start + k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseRows {
    input_len: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl SparseRows {
    pub fn new(input_len: usize, rows: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        for (i, (start, taps)) in rows.iter().enumerate() {
            if start + taps.len() > input_len {
                return Err(Error::shape(format!(
                    "row {i} reads [{start}, {}) past input length {input_len}",
                    start + taps.len()
                )));
            }
        }
        Ok(SparseRows { input_len, rows })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[(usize, Vec<f64>)] {
        &self.rows
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(start, taps)| {
                taps.iter()
                    .zip(&x[*start..*start + taps.len()])
                    .map(|(t, v)| t * v)
                    .sum()
            })
            .collect()
    }

    pub(crate) fn apply_adjoint_into(&self, dy: &[f64], dx: &mut [f64]) {
        for ((start, taps), g) in self.rows.iter().zip(dy) {
            for (k, t) in taps.iter().enumerate() {
                dx[start + k] += t * g;
            }
        }
    }
}

/// Operation recorded at a graph node.
#[derive(Clone, Debug)]
pub enum Op {
    Input(String),
    Constant(Arc<Tensor>),
    /// Elementwise binary op with trailing-aligned broadcasting.
    Binary(BinaryKind, NodeId, NodeId),
    Unary(UnaryKind, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Clamp { x: NodeId, lo: f64, hi: f64 },
    Sum(NodeId),
    Mean(NodeId),
    /// Reduction over the last axis, which is kept with extent 1.
    SumLast(NodeId),
    MeanLast(NodeId),
    Inner(NodeId, NodeId),
    L2Norm(NodeId),
    /// `weight [out, in] * input [in, frames] + bias [out]`.
    Dense {
        weight: NodeId,
        input: NodeId,
        bias: NodeId,
    },
    MatMul(NodeId, NodeId),
    /// Strided valid convolution of a 1-D signal with a bank of filters,
    /// giving `[filters, frames]`.
    Conv1d {
        signal: NodeId,
        filters: NodeId,
        stride: usize,
    },
    /// Adjoint of [`Op::Conv1d`]: overlap-add of filter-weighted frames.
    ConvTranspose1d {
        input: NodeId,
        filters: NodeId,
        stride: usize,
    },
    /// Per-row zero-padded "same" convolution along the last axis of a
    /// `[rows, frames]` input with a `[rows, width]` kernel.
    DepthwiseSmooth { input: NodeId, kernel: NodeId },
    /// Concatenation along axis 0.
    Concat(Vec<NodeId>),
    /// Contiguous range along axis 0.
    Slice {
        x: NodeId,
        start: usize,
        len: usize,
    },
    /// Sliding windows along the last axis: `[rows, m] -> [rows, m - w + 1, w]`.
    Unfold { x: NodeId, window: usize },
    LinearMap { x: NodeId, map: Arc<SparseRows> },
}

impl Op {
    pub fn operands(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Constant(_) => vec![],
            Op::Binary(_, a, b) | Op::Inner(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Unary(_, x)
            | Op::Scale(x, _)
            | Op::Offset(x, _)
            | Op::Clamp { x, .. }
            | Op::Sum(x)
            | Op::Mean(x)
            | Op::SumLast(x)
            | Op::MeanLast(x)
            | Op::L2Norm(x)
            | Op::Slice { x, .. }
            | Op::Unfold { x, .. }
            | Op::LinearMap { x, .. } => vec![*x],
            Op::Dense {
                weight,
                input,
                bias,
            } => vec![*weight, *input, *bias],
            Op::Conv1d {
                signal, filters, ..
            } => vec![*signal, *filters],
            Op::ConvTranspose1d { input, filters, .. } => vec![*input, *filters],
            Op::DepthwiseSmooth { input, kernel } => vec![*input, *kernel],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) shape: Vec<usize>,
}

/// A topologically ordered computation over named inputs.
///
/// Nodes can only reference earlier nodes, so the graph is acyclic by
/// construction. Shapes are inferred when nodes are added.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) inputs: Vec<(String, NodeId)>,
    output: Option<NodeId>,
}

pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
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

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn output(&self) -> Option<NodeId> {
        self.output
    }

    pub fn set_output(&mut self, id: NodeId) {
        self.output = Some(id);
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.iter().map(|(n, _)| n.as_str())
    }

    pub fn input_node(&self, name: &str) -> Option<NodeId> {
        self.inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&[usize]> {
        self.nodes
            .get(id.0)
            .map(|n| n.shape.as_slice())
            .ok_or_else(|| Error::shape(format!("node {} does not exist", id.0)))
    }

    fn rank2(&self, id: NodeId, what: &str) -> Result<(usize, usize)> {
        match self.check(id)? {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(format!("{what} must be rank 2, got {s:?}"))),
        }
    }

    fn rank1(&self, id: NodeId, what: &str) -> Result<usize> {
        match self.check(id)? {
            [n] => Ok(*n),
            s => Err(Error::shape(format!("{what} must be rank 1, got {s:?}"))),
        }
    }

    /// Declares a named input of fixed shape. Re-declaring a name returns the
    /// existing node if the shape agrees.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if let Some(id) = self.input_node(name) {
            if self.shape(id) != shape {
                return Err(Error::shape(format!(
                    "input `{name}` redeclared with shape {shape:?}, was {:?}",
                    self.shape(id)
                )));
            }
            return Ok(id);
        }
        let id = self.push(Op::Input(name.to_string()), shape.to_vec());
        self.inputs.push((name.to_string(), id));
        Ok(id)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.push(Op::Constant(Arc::new(t)), shape)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn binary(&mut self, kind: BinaryKind, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.check(a)?, self.check(b)?);
        let shape = broadcast_shape(sa, sb).ok_or_else(|| {
            Error::shape(format!("cannot broadcast {sa:?} with {sb:?} for {kind:?}"))
        })?;
        Ok(self.push(Op::Binary(kind, a, b), shape))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn min(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryKind::Min, a, b)
    }

    fn unary(&mut self, kind: UnaryKind, x: NodeId) -> Result<NodeId> {
        let shape = self.check(x)?.to_vec();
        Ok(self.push(Op::Unary(kind, x), shape))
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Softplus, x)
    }

    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Sqrt, x)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Square, x)
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(UnaryKind::Abs, x)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.check(x)?.to_vec();
        Ok(self.push(Op::Scale(x, c), shape))
    }

    pub fn offset(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let shape = self.check(x)?.to_vec();
        Ok(self.push(Op::Offset(x, c), shape))
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("clamp bounds {lo} > {hi}")));
        }
        let shape = self.check(x)?.to_vec();
        Ok(self.push(Op::Clamp { x, lo, hi }, shape))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        Ok(self.push(Op::Sum(x), vec![]))
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let n: usize = self.check(x)?.iter().product();
        if n == 0 {
            return Err(Error::shape("mean of an empty tensor"));
        }
        Ok(self.push(Op::Mean(x), vec![]))
    }

    fn last_axis_reduced(&self, x: NodeId) -> Result<Vec<usize>> {
        let s = self.check(x)?;
        match s.last() {
            Some(&n) if n > 0 => {
                let mut out = s.to_vec();
                *out.last_mut().unwrap() = 1;
                Ok(out)
            }
            _ => Err(Error::shape(format!("cannot reduce last axis of {s:?}"))),
        }
    }

    pub fn sum_last(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.last_axis_reduced(x)?;
        Ok(self.push(Op::SumLast(x), shape))
    }

    pub fn mean_last(&mut self, x: NodeId) -> Result<NodeId> {
        let shape = self.last_axis_reduced(x)?;
        Ok(self.push(Op::MeanLast(x), shape))
    }

    pub fn inner(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.rank1(a, "inner lhs")?, self.rank1(b, "inner rhs")?);
        if na != nb {
            return Err(Error::shape(format!("inner product of lengths {na} and {nb}")));
        }
        Ok(self.push(Op::Inner(a, b), vec![]))
    }

    pub fn l2_norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x)?;
        Ok(self.push(Op::L2Norm(x), vec![]))
    }

    pub fn dense(&mut self, weight: NodeId, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let (out, inn) = self.rank2(weight, "dense weight")?;
        let (rows, frames) = self.rank2(input, "dense input")?;
        let nb = self.rank1(bias, "dense bias")?;
        if rows != inn || nb != out {
            return Err(Error::shape(format!(
                "dense weight [{out}, {inn}] with input [{rows}, {frames}] and bias [{nb}]"
            )));
        }
        Ok(self.push(
            Op::Dense {
                weight,
                input,
                bias,
            },
            vec![out, frames],
        ))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.rank2(a, "matmul lhs")?;
        let (k2, n) = self.rank2(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::shape(format!("matmul [{m}, {k}] x [{k2}, {n}]")));
        }
        Ok(self.push(Op::MatMul(a, b), vec![m, n]))
    }

    pub fn conv1d(&mut self, signal: NodeId, filters: NodeId, stride: usize) -> Result<NodeId> {
        let len = self.rank1(signal, "conv1d signal")?;
        let (count, taps) = self.rank2(filters, "conv1d filters")?;
        if stride == 0 || taps == 0 {
            return Err(Error::InvalidArgument("conv1d needs stride > 0 and taps > 0".into()));
        }
        if len < taps {
            return Err(Error::SignalTooShort {
                needed: taps,
                got: len,
            });
        }
        let frames = (len - taps) / stride + 1;
        Ok(self.push(
            Op::Conv1d {
                signal,
                filters,
                stride,
            },
            vec![count, frames],
        ))
    }

    pub fn conv_transpose1d(
        &mut self,
        input: NodeId,
        filters: NodeId,
        stride: usize,
    ) -> Result<NodeId> {
        let (rows, frames) = self.rank2(input, "conv_transpose1d input")?;
        let (count, taps) = self.rank2(filters, "conv_transpose1d filters")?;
        if rows != count {
            return Err(Error::shape(format!(
                "conv_transpose1d input has {rows} rows but {count} filters"
            )));
        }
        if stride == 0 || frames == 0 {
            return Err(Error::InvalidArgument(
                "conv_transpose1d needs stride > 0 and at least one frame".into(),
            ));
        }
        Ok(self.push(
            Op::ConvTranspose1d {
                input,
                filters,
                stride,
            },
            vec![(frames - 1) * stride + taps],
        ))
    }

    pub fn depthwise_smooth(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        let (rows, frames) = self.rank2(input, "smoothing input")?;
        let (krows, width) = self.rank2(kernel, "smoothing kernel")?;
        if krows != rows || width % 2 == 0 {
            return Err(Error::shape(format!(
                "smoothing kernel [{krows}, {width}] for input with {rows} rows (width must be odd)"
            )));
        }
        Ok(self.push(Op::DepthwiseSmooth { input, kernel }, vec![rows, frames]))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat of nothing"))?;
        let tail = self.check(*first)?.get(1..).map(<[usize]>::to_vec);
        let tail = tail.ok_or_else(|| Error::shape("concat of scalars"))?;
        let mut rows = 0;
        for p in parts {
            let s = self.check(*p)?;
            if s.is_empty() || s[1..] != tail[..] {
                return Err(Error::shape(format!("concat part shape {s:?} vs tail {tail:?}")));
            }
            rows += s[0];
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Ok(self.push(Op::Concat(parts.to_vec()), shape))
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let s = self.check(x)?;
        if s.is_empty() || start + len > s[0] || len == 0 {
            return Err(Error::shape(format!(
                "slice [{start}, {}) of shape {s:?}",
                start + len
            )));
        }
        let mut shape = s.to_vec();
        shape[0] = len;
        Ok(self.push(Op::Slice { x, start, len }, shape))
    }

    pub fn unfold(&mut self, x: NodeId, window: usize) -> Result<NodeId> {
        let (rows, frames) = self.rank2(x, "unfold input")?;
        if window == 0 || frames < window {
            return Err(Error::SignalTooShort {
                needed: window,
                got: frames,
            });
        }
        Ok(self.push(Op::Unfold { x, window }, vec![rows, frames - window + 1, window]))
    }

    pub fn linear_map(&mut self, x: NodeId, map: Arc<SparseRows>) -> Result<NodeId> {
        let n = self.rank1(x, "linear map input")?;
        if n != map.input_len() {
            return Err(Error::shape(format!(
                "linear map expects length {}, got {n}",
                map.input_len()
            )));
        }
        let out = map.output_len();
        Ok(self.push(Op::LinearMap { x, map }, vec![out]))
    }
}
