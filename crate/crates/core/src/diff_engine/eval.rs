use std::borrow::Cow;
use std::collections::HashMap;

use super::graph::{BinaryKind, Graph, NodeId, Op, UnaryKind};
use super::Tensor;
use crate::error::{Error, Result};

/// Neumaier summation, so full reductions round about once.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

/// Named tensors bound to graph inputs.
pub type Inputs = HashMap<String, Tensor>;

/// Forward values of every node of one graph evaluation.
pub struct Evaluation<'a> {
    values: Vec<Cow<'a, Tensor>>,
}

impl<'a> Evaluation<'a> {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }
}

/// Offsets into an operand of shape `src` for each element of the
/// broadcast result `out`. `None` means the identity mapping.
fn broadcast_offsets(out: &[usize], src: &[usize]) -> Option<Vec<usize>> {
    if out == src {
        return None;
    }
    let n: usize = out.iter().product();
    let rank = out.len();
    let pad = rank - src.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..rank).rev() {
        let d = if i >= pad { src[i - pad] } else { 1 };
        strides[i] = if d == 1 { 0 } else { acc };
        acc *= d;
    }
    let mut offsets = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..n {
        offsets.push(off);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            off -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Some(offsets)
}

#[inline]
fn at(map: &Option<Vec<usize>>, i: usize) -> usize {
    map.as_ref().map_or(i, |m| m[i])
}

/// `c = a * b + beta * c` over strided matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| {
        (rows.max(1) - 1) * rs + (cols.max(1) - 1) * cs
    };
    assert!(k == 0 || last(m, k, rsa, csa) < a.len());
    assert!(k == 0 || last(k, n, rsb, csb) < b.len());
    assert!(last(m, n, rsc, csc) < c.len());
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    /// Runs the forward pass, recording the value of every node.
    pub fn evaluate<'a>(&self, inputs: &'a Inputs) -> Result<Evaluation<'a>> {
        let mut values: Vec<Cow<'a, Tensor>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |id: NodeId| -> &Tensor { &values[id.0] };
            let out: Cow<'a, Tensor> = match &node.op {
                Op::Input(name) => {
                    let t = inputs
                        .get(name)
                        .ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(Error::shape(format!(
                            "input `{name}` bound with shape {:?}, declared {:?}",
                            t.shape(),
                            node.shape
                        )));
                    }
                    Cow::Borrowed(t)
                }
                op => Cow::Owned(self.forward_op(op, &node.shape, v)?),
            };
            values.push(out);
        }
        Ok(Evaluation { values })
    }

    /// Forward value of the graph output.
    pub fn forward(&self, inputs: &Inputs) -> Result<Tensor> {
        let out = self
            .output()
            .ok_or_else(|| Error::InvalidArgument("graph has no output".into()))?;
        let eval = self.evaluate(inputs)?;
        Ok(eval.value(out).clone())
    }

    fn forward_op<'v>(
        &self,
        op: &Op,
        shape: &[usize],
        v: impl Fn(NodeId) -> &'v Tensor,
    ) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match op {
            Op::Input(_) => unreachable!("inputs are bound in evaluate"),
            Op::Constant(t) => t.data().to_vec(),
            Op::Binary(kind, a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let ia = broadcast_offsets(shape, ta.shape());
                let ib = broadcast_offsets(shape, tb.shape());
                let (da, db) = (ta.data(), tb.data());
                (0..n)
                    .map(|i| {
                        let (x, y) = (da[at(&ia, i)], db[at(&ib, i)]);
                        match kind {
                            BinaryKind::Add => x + y,
                            BinaryKind::Sub => x - y,
                            BinaryKind::Mul => x * y,
                            BinaryKind::Div => x / y,
                            BinaryKind::Min => {
                                if x <= y {
                                    x
                                } else {
                                    y
                                }
                            }
                        }
                    })
                    .collect()
            }
            Op::Unary(kind, x) => {
                let f: fn(f64) -> f64 = match kind {
                    UnaryKind::Softplus => softplus,
                    UnaryKind::Sqrt => f64::sqrt,
                    UnaryKind::Square => |x| x * x,
                    UnaryKind::Abs => f64::abs,
                };
                v(*x).data().iter().map(|&x| f(x)).collect()
            }
            Op::Scale(x, c) => v(*x).data().iter().map(|x| x * c).collect(),
            Op::Offset(x, c) => v(*x).data().iter().map(|x| x + c).collect(),
            Op::Clamp { x, lo, hi } => v(*x).data().iter().map(|x| x.clamp(*lo, *hi)).collect(),
            Op::Sum(x) => vec![compensated_sum(v(*x).data().iter().copied())],
            Op::Mean(x) => {
                let d = v(*x).data();
                vec![compensated_sum(d.iter().copied()) / d.len() as f64]
            }
            Op::SumLast(x) | Op::MeanLast(x) => {
                let t = v(*x);
                let w = *t.shape().last().unwrap();
                let div = if matches!(op, Op::MeanLast(_)) { w as f64 } else { 1.0 };
                t.data()
                    .chunks_exact(w)
                    .map(|c| c.iter().sum::<f64>() / div)
                    .collect()
            }
            Op::Inner(a, b) => vec![compensated_sum(
                v(*a).data().iter().zip(v(*b).data()).map(|(x, y)| x * y),
            )],
            Op::L2Norm(x) => vec![v(*x).data().iter().map(|x| x * x).sum::<f64>().sqrt()],
            Op::Dense {
                weight,
                input,
                bias,
            } => {
                let (w, x, b) = (v(*weight), v(*input), v(*bias));
                let (o, i) = (w.shape()[0], w.shape()[1]);
                let l = x.shape()[1];
                let mut out = Vec::with_capacity(o * l);
                for &bo in b.data() {
                    out.extend(std::iter::repeat(bo).take(l));
                }
                gemm(o, i, l, w.data(), (i, 1), x.data(), (l, 1), 1.0, &mut out, (l, 1));
                out
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (v(*a), v(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let nn = tb.shape()[1];
                let mut out = vec![0.0; m * nn];
                gemm(m, k, nn, ta.data(), (k, 1), tb.data(), (nn, 1), 0.0, &mut out, (nn, 1));
                out
            }
            Op::Conv1d {
                signal,
                filters,
                stride,
            } => {
                let (s, w) = (v(*signal), v(*filters));
                let (c, k) = (w.shape()[0], w.shape()[1]);
                let l = shape[1];
                let mut out = vec![0.0; c * l];
                gemm(c, k, l, w.data(), (k, 1), s.data(), (1, *stride), 0.0, &mut out, (l, 1));
                out
            }
            Op::ConvTranspose1d {
                input,
                filters,
                stride,
            } => {
                let (x, w) = (v(*input), v(*filters));
                let (c, k) = (w.shape()[0], w.shape()[1]);
                let l = x.shape()[1];
                // frames[l, k] = sum_c x[c, l] w[c, k]
                let mut frames = vec![0.0; l * k];
                gemm(l, c, k, x.data(), (1, l), w.data(), (k, 1), 0.0, &mut frames, (k, 1));
                let mut out = vec![0.0; n];
                for (li, frame) in frames.chunks_exact(k).enumerate() {
                    for (o, f) in out[li * stride..li * stride + k].iter_mut().zip(frame) {
                        *o += f;
                    }
                }
                out
            }
            Op::DepthwiseSmooth { input, kernel } => {
                let (x, kr) = (v(*input), v(*kernel));
                let (rows, frames) = (x.shape()[0], x.shape()[1]);
                let width = kr.shape()[1];
                let half = width / 2;
                let mut out = vec![0.0; rows * frames];
                for r in 0..rows {
                    let xr = &x.data()[r * frames..(r + 1) * frames];
                    let kk = &kr.data()[r * width..(r + 1) * width];
                    let orow = &mut out[r * frames..(r + 1) * frames];
                    for (l, o) in orow.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for (wi, kv) in kk.iter().enumerate() {
                            let src = l + wi;
                            if src >= half && src - half < frames {
                                acc += kv * xr[src - half];
                            }
                        }
                        *o = acc;
                    }
                }
                out
            }
            Op::Concat(parts) => parts.iter().flat_map(|p| v(*p).data().iter().copied()).collect(),
            Op::Slice { x, start, len } => {
                let t = v(*x);
                let row: usize = t.shape()[1..].iter().product();
                t.data()[start * row..(start + len) * row].to_vec()
            }
            Op::Unfold { x, window } => {
                let t = v(*x);
                let (rows, frames) = (t.shape()[0], t.shape()[1]);
                let segs = frames - window + 1;
                let mut out = Vec::with_capacity(rows * segs * window);
                for r in 0..rows {
                    let row = &t.data()[r * frames..(r + 1) * frames];
                    for s in 0..segs {
                        out.extend_from_slice(&row[s..s + window]);
                    }
                }
                out
            }
            Op::LinearMap { x, map } => map.apply(v(*x).data()),
        };
        Tensor::new(shape.to_vec(), data)
    }

    /// Reverse-mode gradients of the scalar output with respect to the
    /// named inputs.
    pub fn backward(&self, eval: &Evaluation<'_>, wrt: &[&str]) -> Result<HashMap<String, Tensor>> {
        let out = self
            .output()
            .ok_or_else(|| Error::InvalidArgument("graph has no output".into()))?;
        let out_shape = self.shape(out);
        if out_shape.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar(out_shape.to_vec()));
        }
        let mut targets = Vec::with_capacity(wrt.len());
        for name in wrt {
            let id = self
                .input_node(name)
                .ok_or_else(|| Error::UnboundInput(name.to_string()))?;
            targets.push((name.to_string(), id));
        }

        let mut needs = vec![false; self.nodes.len()];
        for (_, id) in &targets {
            needs[id.0] = true;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.operands().iter().any(|o| needs[o.0]) {
                needs[i] = true;
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if needs[out.0] {
            grads[out.0] = Some(vec![1.0]);
        }
        for i in (0..=out.0).rev() {
            if matches!(self.nodes[i].op, Op::Input(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_op(i, &g, eval, &needs, &mut grads);
        }

        Ok(targets
            .into_iter()
            .map(|(name, id)| {
                let shape = self.shape(id).to_vec();
                let n = shape.iter().product();
                let data = grads[id.0].take().unwrap_or_else(|| vec![0.0; n]);
                (name, Tensor::new(shape, data).expect("gradient matches input shape"))
            })
            .collect())
    }

    fn backward_op(
        &self,
        i: usize,
        g: &[f64],
        eval: &Evaluation<'_>,
        needs: &[bool],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let node = &self.nodes[i];
        let val = |id: NodeId| eval.value(id);
        let acc = |id: NodeId, grads: &mut [Option<Vec<f64>>]| -> Option<Vec<f64>> {
            if !needs[id.0] {
                return None;
            }
            let n: usize = self.shape(id).iter().product();
            Some(grads[id.0].take().unwrap_or_else(|| vec![0.0; n]))
        };
        macro_rules! with_grad {
            ($id:expr, |$buf:ident| $body:block) => {
                if let Some(mut $buf) = acc($id, grads) {
                    $body
                    grads[$id.0] = Some($buf);
                }
            };
        }

        match &node.op {
            Op::Input(_) | Op::Constant(_) => {}
            Op::Binary(kind, a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ia = broadcast_offsets(&node.shape, ta.shape());
                let ib = broadcast_offsets(&node.shape, tb.shape());
                let (da, db) = (ta.data(), tb.data());
                with_grad!(*a, |buf| {
                    for (k, gk) in g.iter().enumerate() {
                        let (x, y) = (da[at(&ia, k)], db[at(&ib, k)]);
                        let d = match kind {
                            BinaryKind::Add | BinaryKind::Sub => 1.0,
                            BinaryKind::Mul => y,
                            BinaryKind::Div => 1.0 / y,
                            BinaryKind::Min => {
                                if x <= y {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                        buf[at(&ia, k)] += gk * d;
                    }
                });
                with_grad!(*b, |buf| {
                    for (k, gk) in g.iter().enumerate() {
                        let (x, y) = (da[at(&ia, k)], db[at(&ib, k)]);
                        let d = match kind {
                            BinaryKind::Add => 1.0,
                            BinaryKind::Sub => -1.0,
                            BinaryKind::Mul => x,
                            BinaryKind::Div => -x / (y * y),
                            BinaryKind::Min => {
                                if x <= y {
                                    0.0
                                } else {
                                    1.0
                                }
                            }
                        };
                        buf[at(&ib, k)] += gk * d;
                    }
                });
            }
            Op::Unary(kind, x) => {
                let dx = val(*x).data();
                let y = eval.value(NodeId(i)).data();
                with_grad!(*x, |buf| {
                    for k in 0..g.len() {
                        let d = match kind {
                            UnaryKind::Softplus => sigmoid(dx[k]),
                            UnaryKind::Sqrt => {
                                if y[k] > 0.0 {
                                    0.5 / y[k]
                                } else {
                                    0.0
                                }
                            }
                            UnaryKind::Square => 2.0 * dx[k],
                            UnaryKind::Abs => {
                                if dx[k] > 0.0 {
                                    1.0
                                } else if dx[k] < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                        };
                        buf[k] += g[k] * d;
                    }
                });
            }
            Op::Scale(x, c) => with_grad!(*x, |buf| {
                for (b, gk) in buf.iter_mut().zip(g) {
                    *b += gk * c;
                }
            }),
            Op::Offset(x, _) => with_grad!(*x, |buf| {
                for (b, gk) in buf.iter_mut().zip(g) {
                    *b += gk;
                }
            }),
            Op::Clamp { x, lo, hi } => {
                let dx = val(*x).data();
                with_grad!(*x, |buf| {
                    for k in 0..g.len() {
                        if dx[k] >= *lo && dx[k] <= *hi {
                            buf[k] += g[k];
                        }
                    }
                });
            }
            Op::Sum(x) | Op::Mean(x) => with_grad!(*x, |buf| {
                let scale = if matches!(node.op, Op::Mean(_)) {
                    1.0 / buf.len() as f64
                } else {
                    1.0
                };
                for b in buf.iter_mut() {
                    *b += g[0] * scale;
                }
            }),
            Op::SumLast(x) | Op::MeanLast(x) => {
                let w = *self.shape(*x).last().unwrap();
                let scale = if matches!(node.op, Op::MeanLast(_)) {
                    1.0 / w as f64
                } else {
                    1.0
                };
                with_grad!(*x, |buf| {
                    for (chunk, gk) in buf.chunks_exact_mut(w).zip(g) {
                        for b in chunk {
                            *b += gk * scale;
                        }
                    }
                });
            }
            Op::Inner(a, b) => {
                let (da, db) = (val(*a).data(), val(*b).data());
                with_grad!(*a, |buf| {
                    for (bb, y) in buf.iter_mut().zip(db) {
                        *bb += g[0] * y;
                    }
                });
                with_grad!(*b, |buf| {
                    for (bb, x) in buf.iter_mut().zip(da) {
                        *bb += g[0] * x;
                    }
                });
            }
            Op::L2Norm(x) => {
                let norm = eval.value(NodeId(i)).data()[0];
                let dx = val(*x).data();
                if norm > 0.0 {
                    with_grad!(*x, |buf| {
                        for (b, xv) in buf.iter_mut().zip(dx) {
                            *b += g[0] * xv / norm;
                        }
                    });
                }
            }
            Op::Dense {
                weight,
                input,
                bias,
            } => {
                let (w, x) = (val(*weight), val(*input));
                let (o, inn) = (w.shape()[0], w.shape()[1]);
                let l = x.shape()[1];
                with_grad!(*weight, |buf| {
                    gemm(o, l, inn, g, (l, 1), x.data(), (1, l), 1.0, &mut buf, (inn, 1));
                });
                with_grad!(*input, |buf| {
                    gemm(inn, o, l, w.data(), (1, inn), g, (l, 1), 1.0, &mut buf, (l, 1));
                });
                with_grad!(*bias, |buf| {
                    for (b, row) in buf.iter_mut().zip(g.chunks_exact(l)) {
                        *b += row.iter().sum::<f64>();
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let nn = tb.shape()[1];
                with_grad!(*a, |buf| {
                    gemm(m, nn, k, g, (nn, 1), tb.data(), (1, nn), 1.0, &mut buf, (k, 1));
                });
                with_grad!(*b, |buf| {
                    gemm(k, m, nn, ta.data(), (1, k), g, (nn, 1), 1.0, &mut buf, (nn, 1));
                });
            }
            Op::Conv1d {
                signal,
                filters,
                stride,
            } => {
                let (s, w) = (val(*signal), val(*filters));
                let (c, k) = (w.shape()[0], w.shape()[1]);
                let l = node.shape[1];
                with_grad!(*filters, |buf| {
                    gemm(c, l, k, g, (l, 1), s.data(), (*stride, 1), 1.0, &mut buf, (k, 1));
                });
                with_grad!(*signal, |buf| {
                    let mut frames = vec![0.0; l * k];
                    gemm(l, c, k, g, (1, l), w.data(), (k, 1), 0.0, &mut frames, (k, 1));
                    for (li, frame) in frames.chunks_exact(k).enumerate() {
                        for (b, f) in buf[li * stride..li * stride + k].iter_mut().zip(frame) {
                            *b += f;
                        }
                    }
                });
            }
            Op::ConvTranspose1d {
                input,
                filters,
                stride,
            } => {
                let (x, w) = (val(*input), val(*filters));
                let (c, k) = (w.shape()[0], w.shape()[1]);
                let l = x.shape()[1];
                with_grad!(*input, |buf| {
                    gemm(c, k, l, w.data(), (k, 1), g, (1, *stride), 1.0, &mut buf, (l, 1));
                });
                with_grad!(*filters, |buf| {
                    gemm(c, l, k, x.data(), (l, 1), g, (*stride, 1), 1.0, &mut buf, (k, 1));
                });
            }
            Op::DepthwiseSmooth { input, kernel } => {
                let (x, kr) = (val(*input), val(*kernel));
                let (rows, frames) = (x.shape()[0], x.shape()[1]);
                let width = kr.shape()[1];
                let half = width / 2;
                with_grad!(*input, |buf| {
                    for r in 0..rows {
                        let kk = &kr.data()[r * width..(r + 1) * width];
                        for l in 0..frames {
                            let gv = g[r * frames + l];
                            for (wi, kv) in kk.iter().enumerate() {
                                let src = l + wi;
                                if src >= half && src - half < frames {
                                    buf[r * frames + src - half] += gv * kv;
                                }
                            }
                        }
                    }
                });
                with_grad!(*kernel, |buf| {
                    for r in 0..rows {
                        let xr = &x.data()[r * frames..(r + 1) * frames];
                        for l in 0..frames {
                            let gv = g[r * frames + l];
                            for wi in 0..width {
                                let src = l + wi;
                                if src >= half && src - half < frames {
                                    buf[r * width + wi] += gv * xr[src - half];
                                }
                            }
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n: usize = self.shape(*p).iter().product();
                    with_grad!(*p, |buf| {
                        for (b, gk) in buf.iter_mut().zip(&g[off..off + n]) {
                            *b += gk;
                        }
                    });
                    off += n;
                }
            }
            Op::Slice { x, start, .. } => {
                let row: usize = self.shape(*x)[1..].iter().product();
                with_grad!(*x, |buf| {
                    for (b, gk) in buf[start * row..].iter_mut().zip(g) {
                        *b += gk;
                    }
                });
            }
            Op::Unfold { x, window } => {
                let frames = self.shape(*x)[1];
                let segs = frames - window + 1;
                with_grad!(*x, |buf| {
                    for (r, row) in buf.chunks_exact_mut(frames).enumerate() {
                        for s in 0..segs {
                            let base = (r * segs + s) * window;
                            for (b, gk) in row[s..s + window].iter_mut().zip(&g[base..base + window]) {
                                *b += gk;
                            }
                        }
                    }
                });
            }
            Op::LinearMap { x, map } => with_grad!(*x, |buf| {
                map.apply_adjoint_into(g, &mut buf);
            }),
        }
    }
}

/// Scalar value of the graph output and its gradients with respect to the
/// inputs named in `wrt`.
pub fn evaluate_with_gradient(
    graph: &Graph,
    inputs: &Inputs,
    wrt: &[&str],
) -> Result<(f64, HashMap<String, Tensor>)> {
    let out = graph
        .output()
        .ok_or_else(|| Error::InvalidArgument("graph has no output".into()))?;
    let shape = graph.shape(out);
    if shape.iter().product::<usize>() != 1 {
        return Err(Error::NotScalar(shape.to_vec()));
    }
    let eval = graph.evaluate(inputs)?;
    let value = eval.value(out).data()[0];
    let grads = graph.backward(&eval, wrt)?;
    Ok((value, grads))
}
