//! Layers shared by the generator and the discriminator.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{Bound, ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tape::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            weight: store.add_glorot(format!("{name}.weight"), inputs, outputs, rng),
            bias: store.add_zeros(format!("{name}.bias"), 1, outputs),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, b: &Bound, x: Var) -> Var {
        let y = g.matmul(x, b.var(self.weight));
        g.add_row(y, b.var(self.bias))
    }
}

/// One gated LSTM layer. Gate columns are ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmLayer {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_input = store.add_glorot(format!("{name}.w_input"), inputs, 4 * hidden, rng);
        let w_hidden = store.add_glorot(format!("{name}.w_hidden"), hidden, 4 * hidden, rng);
        // Forget gate starts open.
        let mut bias = Array2::zeros((1, 4 * hidden));
        for j in hidden..2 * hidden {
            bias[[0, j]] = T::one();
        }
        let bias = store.add(format!("{name}.bias"), bias);
        LstmLayer {
            w_input,
            w_hidden,
            bias,
            hidden,
        }
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> LstmState {
        LstmState {
            h: g.constant(Array2::zeros((batch, self.hidden))),
            c: g.constant(Array2::zeros((batch, self.hidden))),
        }
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, b: &Bound, x: Var, prev: LstmState) -> LstmState {
        let h = self.hidden;
        let zx = g.matmul(x, b.var(self.w_input));
        let zh = g.matmul(prev.h, b.var(self.w_hidden));
        let z = g.add(zx, zh);
        let z = g.add_row(z, b.var(self.bias));
        let i = g.slice_cols(z, 0, h);
        let i = g.sigmoid(i);
        let f = g.slice_cols(z, h, h);
        let f = g.sigmoid(f);
        let cand = g.slice_cols(z, 2 * h, h);
        let cand = g.tanh(cand);
        let o = g.slice_cols(z, 3 * h, h);
        let o = g.sigmoid(o);
        let keep = g.mul(f, prev.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }
}

/// Stack of LSTM layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let n_in = if l == 0 { inputs } else { hidden };
                LstmLayer::new(store, &format!("{name}.{l}"), n_in, hidden, rng)
            })
            .collect();
        Lstm { layers }
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> Vec<LstmState> {
        self.layers.iter().map(|l| l.zero_state(g, batch)).collect()
    }

    /// Advances every layer by one step; returns the new states.
    pub fn step<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        b: &Bound,
        x: Var,
        prev: &[LstmState],
    ) -> Vec<LstmState> {
        let mut input = x;
        let mut next = Vec::with_capacity(self.layers.len());
        for (layer, &state) in self.layers.iter().zip(prev) {
            let s = layer.step(g, b, input, state);
            input = s.h;
            next.push(s);
        }
        next
    }
}

/// Top-layer hidden output of a state stack.
pub fn top(states: &[LstmState]) -> Var {
    states.last().expect("at least one layer").h
}
