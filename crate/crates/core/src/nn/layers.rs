use rand::Rng;

use super::graph::{matvec, sigmoid};
use super::params::{init_fan_in, init_normal};
use super::{Graph, NodeId, ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

/// Hidden size used by both base models.
pub const HIDDEN_DIM: usize = 100;

/// Token embedding size used by both base models.
pub const EMBED_DIM: usize = 100;

/// Embedding rows are drawn from `N(0, EMBED_INIT_STD)`.
pub const EMBED_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
pub struct Embedding {
    pub table: ParamId,
    pub dim: usize,
}

impl Embedding {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        rows: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let table = params.add(
            format!("{name}.table"),
            init_normal(rows, dim, EMBED_INIT_STD, rng),
        );
        Self { table, dim }
    }

    pub fn lookup(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Vec<NodeId>> {
        let table = g.param(self.table);
        ids.iter().map(|&id| g.row(table, id)).collect()
    }

    /// Tape-free lookup of one row.
    pub fn row<'a>(&self, params: &'a ParamSet, id: usize) -> Result<&'a [f64]> {
        let t = params.value(self.table);
        if id >= t.rows() {
            return Err(Error::IndexOutOfRange {
                index: id,
                len: t.rows(),
            });
        }
        Ok(t.row(id))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), init_fan_in(out_dim, in_dim, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(out_dim, 1));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: NodeId) -> NodeId {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        g.affine(w, x, b)
    }

    /// Tape-free `W x + b`.
    pub fn apply(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut out = matvec(params.value(self.weight), x);
        for (o, b) in out.iter_mut().zip(params.value(self.bias).data()) {
            *o += b;
        }
        out
    }
}

/// LSTM cell. One stacked weight matrix maps `[x; h]` to the pre-activations
/// of the input, forget and output gates and the candidate, in that order.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(
            format!("{name}.weight"),
            init_fan_in(4 * hidden_dim, input_dim + hidden_dim, rng),
        );
        let mut b = Tensor::zeros(4 * hidden_dim, 1);
        for v in &mut b.data_mut()[hidden_dim..2 * hidden_dim] {
            *v = 1.0;
        }
        let bias = params.add(format!("{name}.bias"), b);
        Self {
            weight,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    pub fn zero_state(&self, g: &mut Graph<'_>) -> LstmState {
        let h = g.input(Tensor::zeros(self.hidden_dim, 1));
        let c = g.input(Tensor::zeros(self.hidden_dim, 1));
        LstmState { h, c }
    }

    pub fn step(&self, g: &mut Graph<'_>, x: NodeId, state: LstmState) -> LstmState {
        let hd = self.hidden_dim;
        let xh = g.concat(&[x, state.h]);
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let z = g.affine(w, xh, b);
        let zi = g.slice(z, 0, hd);
        let zf = g.slice(z, hd, hd);
        let zo = g.slice(z, 2 * hd, hd);
        let zc = g.slice(z, 3 * hd, hd);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let o = g.sigmoid(zo);
        let cand = g.tanh(zc);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let squashed = g.tanh(c);
        let h = g.mul(o, squashed);
        LstmState { h, c }
    }

    /// Tape-free step; returns `(h, c)`.
    pub fn step_values(
        &self,
        params: &ParamSet,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden_dim;
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let mut z = matvec(params.value(self.weight), &xh);
        for (zi, b) in z.iter_mut().zip(params.value(self.bias).data()) {
            *zi += b;
        }
        let mut h_new = vec![0.0; hd];
        let mut c_new = vec![0.0; hd];
        for k in 0..hd {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hd + k]);
            let o = sigmoid(z[2 * hd + k]);
            let cand = z[3 * hd + k].tanh();
            c_new[k] = f * c[k] + i * cand;
            h_new[k] = o * c_new[k].tanh();
        }
        (h_new, c_new)
    }

    /// Tape-free run from the zero state; returns the final `(h, c)`.
    pub fn run_values<'a, I: IntoIterator<Item = &'a [f64]>>(
        &self,
        params: &ParamSet,
        inputs: I,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut h = vec![0.0; self.hidden_dim];
        let mut c = vec![0.0; self.hidden_dim];
        for x in inputs {
            (h, c) = self.step_values(params, x, &h, &c);
        }
        (h, c)
    }

    /// Runs the cell over `inputs` from the zero state; returns the final state.
    pub fn run(&self, g: &mut Graph<'_>, inputs: &[NodeId]) -> LstmState {
        let mut state = self.zero_state(g);
        for &x in inputs {
            state = self.step(g, x, state);
        }
        state
    }
}
