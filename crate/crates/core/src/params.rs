//! Named parameter tensors and their binding onto a [`Graph`].

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Gradients, Graph, Mat, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NamedTensor<T> {
    pub name: String,
    pub value: Array2<T>,
}

/// Ordered collection of trainable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ParamStore<T> {
    entries: Vec<NamedTensor<T>>,
}

/// Graph leaves for every tensor of one store, in store order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        self.entries.push(NamedTensor {
            name: name.into(),
            value,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Uniform Glorot initialisation.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let value = Array2::from_shape_fn((rows, cols), |_| {
            T::of(rng.random_range(-limit..limit))
        });
        self.add(name, value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Array2::zeros((rows, cols)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Array2<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.entries[id.0].value
    }

    pub fn entries(&self) -> &[NamedTensor<T>] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Places every tensor on the graph as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self.entries.iter().map(|e| g.input(e.value.clone())).collect(),
        }
    }

    /// Places every tensor on the graph as a constant.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        Bound {
            vars: self
                .entries
                .iter()
                .map(|e| g.constant(e.value.clone()))
                .collect(),
        }
    }

    /// Gradients for every tensor of the store, zero where unreached.
    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients<T>) -> Vec<Mat<T>> {
        self.entries
            .iter()
            .zip(&bound.vars)
            .map(|(e, &v)| grads.get_or_zeros(v, e.value.dim()))
            .collect()
    }

    pub fn zeros_like(&self) -> Vec<Mat<T>> {
        self.entries
            .iter()
            .map(|e| Array2::zeros(e.value.dim()))
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.value.iter().all(|x| x.is_finite()))
    }

    /// Flattened view in store order.
    pub fn flatten(&self) -> Vec<T> {
        self.entries
            .iter()
            .flat_map(|e| e.value.iter().cloned())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_scalars() {
            return Err(Error::Shape(format!(
                "expected {} scalars, got {}",
                self.num_scalars(),
                flat.len()
            )));
        }
        let mut at = 0;
        for e in &mut self.entries {
            for x in e.value.iter_mut() {
                *x = flat[at];
                at += 1;
            }
        }
        Ok(())
    }

    /// Checks that names and shapes agree with `other`.
    pub fn check_layout(&self, other: &ParamStore<T>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Shape(format!(
                "parameter count {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.value.dim() != b.value.dim() {
                return Err(Error::Shape(format!(
                    "parameter {} {:?} vs {} {:?}",
                    a.name,
                    a.value.dim(),
                    b.name,
                    b.value.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Euclidean norm over a list of gradient tensors.
pub fn global_norm<T: Scalar>(grads: &[Mat<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|&x| x * x)
        .sum::<T>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Mat<T>], max_norm: T) -> T {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|x| x * k);
        }
    }
    norm
}
