//! Tape-based reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] borrows a [`ParamSet`] immutably and records every operation as
//! a node. [`Graph::backward`] sweeps the tape once in reverse and accumulates
//! parameter gradients into a caller-owned [`Grads`], so several forward
//! passes (a minibatch) can share one buffer.

use super::{Grads, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Param(ParamId),
    Input,
    Row { table: NodeId, index: usize },
    MatVec { m: NodeId, x: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Concat(Vec<NodeId>),
    Slice { a: NodeId, start: usize },
    Reshape(NodeId),
    Dot(NodeId, NodeId),
    Sum(NodeId),
    LogSoftmax(NodeId),
    Pick { a: NodeId, index: usize },
}

struct Node {
    op: Op,
    /// Empty for parameter nodes, whose value lives in the `ParamSet`.
    value: Tensor,
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(softmax(xs))`.
pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    xs.iter().map(|x| x - lse).collect()
}

pub(crate) fn matvec(m: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|i| m.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match self.nodes[id.0].op {
            Op::Param(p) => self.params.value(p),
            _ => &self.nodes[id.0].value,
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).item()
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.push(Op::Param(id), Tensor::zeros(0, 0))
    }

    /// A constant leaf; receives no gradient outside the graph.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn input_vector(&mut self, data: &[f64]) -> NodeId {
        self.input(Tensor::vector(data.to_vec()))
    }

    /// Row `index` of `table` as a column vector (embedding lookup).
    pub fn row(&mut self, table: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(table);
        if index >= t.rows() {
            return Err(Error::IndexOutOfRange {
                index,
                len: t.rows(),
            });
        }
        let v = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(Op::Row { table, index }, v))
    }

    pub fn matvec(&mut self, m: NodeId, x: NodeId) -> NodeId {
        let (mv, xv) = (self.value(m), self.value(x));
        assert_eq!(
            mv.cols(),
            xv.len(),
            "matvec: {}x{} times {}",
            mv.rows(),
            mv.cols(),
            xv.len()
        );
        let out = Tensor::vector(matvec(mv, xv.data()));
        self.push(Op::MatVec { m, x }, out)
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: NodeId, x: NodeId, b: NodeId) -> NodeId {
        let wx = self.matvec(w, x);
        self.add(wx, b)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, op: Op, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "elementwise op on mismatched shapes"
        );
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        self.push(op, out)
    }

    fn map(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let av = self.value(a);
        let out = Tensor::from_vec(
            av.rows(),
            av.cols(),
            av.data().iter().map(|x| f(*x)).collect(),
        );
        self.push(op, out)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.zip(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        self.map(a, Op::Scale(a, k), |x| k * x)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    /// Stacks vectors end to end.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().to_vec())
            .collect();
        self.push(Op::Concat(parts.to_vec()), Tensor::vector(data))
    }

    /// Entries `start..start + len` of a vector.
    pub fn slice(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let data = self.value(a).data()[start..start + len].to_vec();
        self.push(Op::Slice { a, start }, Tensor::vector(data))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let v = self.value(a).clone().reshaped(rows, cols);
        self.push(Op::Reshape(a), v)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.len(), bv.len(), "dot on mismatched lengths");
        let d = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Tensor::scalar(d))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::vector(log_softmax(self.value(a).data()));
        self.push(Op::LogSoftmax(a), v)
    }

    pub fn pick(&mut self, a: NodeId, index: usize) -> NodeId {
        let v = self.value(a).data()[index];
        self.push(Op::Pick { a, index }, Tensor::scalar(v))
    }

    /// `-log softmax(logits)[target]`.
    pub fn softmax_xent(&mut self, logits: NodeId, target: usize) -> NodeId {
        let lp = self.log_softmax(logits);
        let picked = self.pick(lp, target);
        self.scale(picked, -1.0)
    }

    /// Sum of scalar nodes.
    pub fn add_all(&mut self, terms: &[NodeId]) -> NodeId {
        let stacked = self.concat(terms);
        self.sum(stacked)
    }

    /// Accumulates `d output / d params` into `grads`. `output` must be scalar.
    pub fn backward(&self, output: NodeId, grads: &mut Grads) {
        self.backward_scaled(output, 1.0, grads);
    }

    /// As [`Graph::backward`], with the output gradient seeded at `seed`.
    pub fn backward_scaled(&self, output: NodeId, seed: f64, grads: &mut Grads) {
        assert_eq!(
            self.value(output).len(),
            1,
            "backward from a non-scalar node"
        );
        let mut node_grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        node_grads[output.0] = Some(vec![seed]);

        for i in (0..=output.0).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let mut sink = Sink {
                graph: self,
                node_grads: &mut node_grads,
                grads: &mut *grads,
            };
            match &self.nodes[i].op {
                Op::Param(p) => {
                    for (acc, gi) in sink.grads.get_mut(*p).data_mut().iter_mut().zip(&g) {
                        *acc += gi;
                    }
                }
                Op::Input => {}
                Op::Row { table, index } => {
                    let cols = self.value(*table).cols();
                    sink.with(*table, |buf| {
                        for (acc, gi) in buf[index * cols..(index + 1) * cols].iter_mut().zip(&g) {
                            *acc += gi;
                        }
                    });
                }
                Op::MatVec { m, x } => {
                    let mv = self.value(*m);
                    let xv = self.value(*x).data();
                    let cols = mv.cols();
                    sink.with(*x, |buf| {
                        for (r, gi) in g.iter().enumerate() {
                            if *gi != 0.0 {
                                for (acc, w) in buf.iter_mut().zip(mv.row(r)) {
                                    *acc += gi * w;
                                }
                            }
                        }
                    });
                    sink.with(*m, |buf| {
                        for (r, gi) in g.iter().enumerate() {
                            if *gi != 0.0 {
                                for (acc, xj) in buf[r * cols..(r + 1) * cols].iter_mut().zip(xv) {
                                    *acc += gi * xj;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    sink.add(*a, &g, 1.0);
                    sink.add(*b, &g, 1.0);
                }
                Op::Sub(a, b) => {
                    sink.add(*a, &g, 1.0);
                    sink.add(*b, &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    sink.add(*a, &ga, 1.0);
                    sink.add(*b, &gb, 1.0);
                }
                Op::Scale(a, k) => sink.add(*a, &g, *k),
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gi, s)| gi * s * (1.0 - s)).collect();
                    sink.add(*a, &ga, 1.0);
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.data();
                    let ga: Vec<f64> = g.iter().zip(y).map(|(gi, t)| gi * (1.0 - t * t)).collect();
                    sink.add(*a, &ga, 1.0);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        sink.add(p, &g[offset..offset + n], 1.0);
                        offset += n;
                    }
                }
                Op::Slice { a, start } => {
                    sink.with(*a, |buf| {
                        for (acc, gi) in buf[*start..*start + g.len()].iter_mut().zip(&g) {
                            *acc += gi;
                        }
                    });
                }
                Op::Reshape(a) => sink.add(*a, &g, 1.0),
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let ga: Vec<f64> = bv.iter().map(|y| g[0] * y).collect();
                    let gb: Vec<f64> = av.iter().map(|x| g[0] * x).collect();
                    sink.add(*a, &ga, 1.0);
                    sink.add(*b, &gb, 1.0);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    sink.add(*a, &vec![g[0]; n], 1.0);
                }
                Op::LogSoftmax(a) => {
                    let y = self.nodes[i].value.data();
                    let total: f64 = g.iter().sum();
                    let ga: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(gi, lp)| gi - lp.exp() * total)
                        .collect();
                    sink.add(*a, &ga, 1.0);
                }
                Op::Pick { a, index } => {
                    sink.with(*a, |buf| buf[*index] += g[0]);
                }
            }
        }
    }
}

/// Routes gradient contributions either into a parameter buffer or into a
/// lazily allocated per-node buffer.
struct Sink<'a, 'g, 'p> {
    graph: &'a Graph<'p>,
    node_grads: &'a mut Vec<Option<Vec<f64>>>,
    grads: &'g mut Grads,
}

impl Sink<'_, '_, '_> {
    fn with(&mut self, id: NodeId, f: impl FnOnce(&mut [f64])) {
        match self.graph.nodes[id.0].op {
            Op::Param(p) => f(self.grads.get_mut(p).data_mut()),
            Op::Input => {}
            _ => {
                let n = self.graph.nodes[id.0].value.len();
                let buf = self.node_grads[id.0].get_or_insert_with(|| vec![0.0; n]);
                f(buf)
            }
        }
    }

    fn add(&mut self, id: NodeId, g: &[f64], k: f64) {
        self.with(id, |buf| {
            for (acc, gi) in buf.iter_mut().zip(g) {
                *acc += k * gi;
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single(value: Tensor) -> (ParamSet, ParamId) {
        let mut ps = ParamSet::new();
        let id = ps.add("x", value);
        (ps, id)
    }

    #[test]
    fn diamond_sums_fan_out() {
        // y = x*x + 3x at x = 2: dy/dx = 2x + 3 = 7.
        let (ps, id) = single(Tensor::scalar(2.0));
        let mut g = Graph::new(&ps);
        let x = g.param(id);
        let sq = g.mul(x, x);
        let lin = g.scale(x, 3.0);
        let y = g.add(sq, lin);
        let mut grads = ps.zeros_like();
        g.backward(y, &mut grads);
        assert_eq!(g.scalar(y), 10.0);
        assert_eq!(grads.get(id).item(), 7.0);
    }

    #[test]
    fn embed_sums_repeated_rows() {
        let (ps, id) = single(Tensor::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]));
        let mut g = Graph::new(&ps);
        let table = g.param(id);
        let a = g.row(table, 0).unwrap();
        assert_eq!(g.value(a).data(), &[1.0, 0.0]);
        let b = g.row(table, 2).unwrap();
        let c = g.row(table, 2).unwrap();
        let all = g.concat(&[a, b, c]);
        let s = g.sum(all);
        let mut grads = ps.zeros_like();
        g.backward(s, &mut grads);
        assert_eq!(grads.get(id).data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn embed_out_of_range() {
        let (ps, id) = single(Tensor::zeros(3, 2));
        let mut g = Graph::new(&ps);
        let table = g.param(id);
        assert!(matches!(
            g.row(table, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn xent_uniform_logits() {
        let (ps, id) = single(Tensor::vector(vec![0.7; 3]));
        let mut g = Graph::new(&ps);
        let logits = g.param(id);
        let loss = g.softmax_xent(logits, 1);
        assert_abs_diff_eq!(g.scalar(loss), 3f64.ln(), epsilon = 1e-12);
        let lp = g.log_softmax(logits);
        for p in g.value(lp).data() {
            assert_abs_diff_eq!(p.exp(), 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn xent_vanishes_for_dominant_logit() {
        let mut prev = f64::INFINITY;
        for big in [1.0, 5.0, 20.0, 100.0] {
            let (ps, id) = single(Tensor::vector(vec![big, 0.0, 0.0]));
            let mut g = Graph::new(&ps);
            let logits = g.param(id);
            let node = g.softmax_xent(logits, 0);
            let loss = g.scalar(node);
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-40);
    }

    #[test]
    fn log_softmax_stable_for_large_inputs() {
        let lp = log_softmax(&[1000.0, 1000.0]);
        assert_abs_diff_eq!(lp[0], -(2f64.ln()), epsilon = 1e-12);
    }
}
