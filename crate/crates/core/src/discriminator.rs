//! Recurrent sequence classifier `D(X)`: projection, one LSTM layer, and a
//! sigmoid head on the final hidden state.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Linear, LstmLayer};
use crate::params::{Bound, ParamStore};
use crate::scalar::{self, Scalar};
use crate::tape::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Row width: vocabulary size for tokens, feature count for real data.
    pub input_width: usize,
    pub seq_len: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// Token inputs must be row-stochastic.
    pub row_stochastic: bool,
}

impl DiscriminatorConfig {
    pub fn text(vocab_size: usize, seq_len: usize) -> Self {
        DiscriminatorConfig {
            input_width: vocab_size,
            seq_len,
            embed_dim: 32,
            hidden: 64,
            row_stochastic: true,
        }
    }

    pub fn trajectory(features: usize, seq_len: usize) -> Self {
        DiscriminatorConfig {
            input_width: features,
            seq_len,
            embed_dim: 32,
            hidden: 64,
            row_stochastic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layout {
    project: Linear,
    encoder: LstmLayer,
    head: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig,
    layout: Layout,
    pub params: ParamStore<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(config: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        if config.input_width == 0 || config.seq_len == 0 || config.embed_dim == 0 || config.hidden == 0 {
            return Err(Error::Config("discriminator sizes must be positive".into()));
        }
        let mut params = ParamStore::new();
        let project = Linear::new(&mut params, "disc.project", config.input_width, config.embed_dim, rng);
        let encoder = LstmLayer::new(&mut params, "disc.lstm", config.embed_dim, config.hidden, rng);
        let head = Linear::new(&mut params, "disc.head", config.hidden, 1, rng);
        Ok(Discriminator {
            config,
            layout: Layout {
                project,
                encoder,
                head,
            },
            params,
        })
    }

    pub fn from_params(config: DiscriminatorConfig, params: ParamStore<T>) -> Result<Self> {
        let mut d = Discriminator::new(config, &mut crate::rng::rng_from(0))?;
        d.params.check_layout(&params)?;
        d.params = params;
        Ok(d)
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    /// Zeroes the output layer so every input scores exactly ½.
    pub fn zero_head(&mut self) {
        self.params.get_mut(self.layout.head.weight).fill(T::zero());
        self.params.get_mut(self.layout.head.bias).fill(T::zero());
    }

    /// Pre-sigmoid scores, `B × 1`, for a sequence given as per-step `B × W` rows.
    pub fn logits_graph(&self, g: &mut Graph<T>, b: &Bound, steps: &[Var]) -> Result<Var> {
        if steps.len() != self.config.seq_len {
            return Err(Error::Shape(format!(
                "discriminator expects {} steps, got {}",
                self.config.seq_len,
                steps.len()
            )));
        }
        let (batch, width) = g.shape(steps[0]);
        if width != self.config.input_width || steps.iter().any(|&s| g.shape(s) != (batch, width)) {
            return Err(Error::Shape(format!(
                "discriminator rows must be {batch} x {}",
                self.config.input_width
            )));
        }
        let mut state = self.layout.encoder.zero_state(g, batch);
        for &x in steps {
            let e = self.layout.project.forward(g, b, x);
            state = self.layout.encoder.step(g, b, e, state);
        }
        Ok(self.layout.head.forward(g, b, state.h))
    }

    fn check_input(&self, x: &Array2<T>) -> Result<()> {
        if x.dim() != (self.config.seq_len, self.config.input_width) {
            return Err(Error::Shape(format!(
                "input is {:?}, expected ({}, {})",
                x.dim(),
                self.config.seq_len,
                self.config.input_width
            )));
        }
        if self.config.row_stochastic {
            let tol = T::of(1e-4);
            for (i, row) in x.rows().into_iter().enumerate() {
                if (row.sum() - T::one()).abs() > tol || row.iter().any(|&p| p < T::zero()) {
                    return Err(Error::Shape(format!("row {i} is not a probability vector")));
                }
            }
        }
        Ok(())
    }

    /// `D(X)` for one `T × W` input.
    pub fn score(&self, x: &Array2<T>) -> Result<T> {
        Ok(self.batch_score(std::slice::from_ref(x))?[0])
    }

    /// `D(X)` for each input, in order.
    pub fn batch_score(&self, xs: &[Array2<T>]) -> Result<Vec<T>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        for x in xs {
            self.check_input(x)?;
        }
        let mut g = Graph::new();
        let b = self.params.bind_frozen(&mut g);
        let steps = stack_steps(&mut g, xs, false);
        let logits = self.logits_graph(&mut g, &b, &steps)?;
        Ok(g.value(logits).iter().map(|&l| scalar::sigmoid(l)).collect())
    }
}

/// Turns `B` inputs of shape `T × W` into `T` per-step `B × W` leaves.
pub fn stack_steps<T: Scalar>(g: &mut Graph<T>, xs: &[Array2<T>], differentiable: bool) -> Vec<Var> {
    let (steps, width) = xs[0].dim();
    (0..steps)
        .map(|i| {
            let m = Array2::from_shape_fn((xs.len(), width), |(r, c)| xs[r][[i, c]]);
            if differentiable {
                g.input(m)
            } else {
                g.constant(m)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng;

    fn micro() -> Discriminator<f64> {
        let cfg = DiscriminatorConfig {
            input_width: 5,
            seq_len: 4,
            embed_dim: 3,
            hidden: 3,
            row_stochastic: true,
        };
        Discriminator::new(cfg, &mut rng_from(2)).unwrap()
    }

    fn random_simplex_rows(rng: &mut impl Rng) -> Array2<f64> {
        let mut x = Array2::from_shape_fn((4, 5), |_| rng.random_range(0.01..1.0));
        for mut row in x.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        x
    }

    #[test]
    fn zero_head_scores_half() {
        let mut d = micro();
        d.zero_head();
        let x = random_simplex_rows(&mut rng_from(0));
        assert_eq!(d.score(&x).unwrap(), 0.5);
    }

    #[test]
    fn scores_are_deterministic_and_open_interval() {
        let d = micro();
        let mut rng = rng_from(1);
        for _ in 0..20 {
            let x = random_simplex_rows(&mut rng);
            let a = d.score(&x).unwrap();
            assert_eq!(a, d.score(&x).unwrap());
            assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn batch_is_elementwise_and_order_preserving() {
        let d = micro();
        let mut rng = rng_from(3);
        let xs: Vec<_> = (0..64).map(|_| random_simplex_rows(&mut rng)).collect();
        let batch = d.batch_score(&xs).unwrap();
        for (x, &s) in xs.iter().zip(&batch) {
            assert!((d.score(x).unwrap() - s).abs() < 1e-6);
        }
        let mut rev = xs.clone();
        rev.reverse();
        let rb = d.batch_score(&rev).unwrap();
        for (a, b) in batch.iter().zip(rb.iter().rev()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(d.batch_score(&xs[..1]).unwrap()[0], d.score(&xs[0]).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = micro();
        assert!(d.score(&Array2::zeros((3, 5))).is_err());
        assert!(d.score(&Array2::from_elem((4, 5), 0.5)).is_err());
    }
}
