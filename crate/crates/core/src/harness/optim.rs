//! First-order optimisers over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tape::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// SGD with momentum 0.9 at learning rate 1e-3.
    pub fn sgd_default() -> Self {
        OptimizerKind::Sgd { lr: 1e-3, momentum: 0.9 }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Sgd { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    first: Vec<Mat<T>>,
    second: Vec<Mat<T>>,
    steps: u64,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, params: &ParamStore<T>) -> Self {
        Optimizer {
            kind,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one descent step with the given gradients.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Mat<T>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Shape(format!("{} gradients for {} tensors", grads.len(), params.len())));
        }
        self.steps += 1;
        for (i, g) in grads.iter().enumerate() {
            let id = crate::params::ParamId(i);
            match self.kind {
                OptimizerKind::Sgd { lr, momentum } => {
                    let v = &mut self.first[i];
                    let (lr, mu) = (T::of(lr), T::of(momentum));
                    v.zip_mut_with(g, |v, &g| *v = mu * *v + g);
                    params.get_mut(id).zip_mut_with(v, |p, &v| *p -= lr * v);
                }
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    let (b1, b2) = (T::of(beta1), T::of(beta2));
                    self.first[i].zip_mut_with(g, |m, &g| *m = b1 * *m + (T::one() - b1) * g);
                    self.second[i].zip_mut_with(g, |s, &g| *s = b2 * *s + (T::one() - b2) * g * g);
                    let c1 = T::one() - b1.powi(self.steps as i32);
                    let c2 = T::one() - b2.powi(self.steps as i32);
                    let (lr, eps) = (T::of(lr), T::of(eps));
                    let p = params.get_mut(id);
                    ndarray::Zip::from(p)
                        .and(&self.first[i])
                        .and(&self.second[i])
                        .for_each(|p, &m, &s| *p -= lr * (m / c1) / ((s / c2).sqrt() + eps));
                }
            }
        }
        Ok(())
    }
}
