//! Training data containers and per-feature standardisation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sequence::{RealSequence, TokenSequence};

/// A training or evaluation set for one output mode.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset<T> {
    Tokens(Vec<TokenSequence>),
    /// Already standardised sequences.
    Real(Vec<RealSequence<T>>),
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        match self {
            Dataset::Tokens(v) => v.len(),
            Dataset::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stable 64-bit FNV-1a digest of the contents.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv::new();
        match self {
            Dataset::Tokens(v) => {
                h.write(b"tokens");
                for s in v {
                    h.write(&(s.true_length as u64).to_le_bytes());
                    for &id in &s.ids {
                        h.write(&(id as u64).to_le_bytes());
                    }
                }
            }
            Dataset::Real(v) => {
                h.write(b"real");
                for s in v {
                    for &x in s.values.iter() {
                        h.write(&x.to_f64_lossy().to_bits().to_le_bytes());
                    }
                }
            }
        }
        format!("{:016x}", h.0)
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Per-column mean and standard deviation; constant columns keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(data: &[RealSequence<f64>]) -> Result<Self> {
        let first = data.first().ok_or(Error::EmptyCorpus)?;
        let f = first.features();
        let mut sum = vec![0.0; f];
        let mut sq = vec![0.0; f];
        let mut n = 0.0;
        for s in data {
            if s.features() != f {
                return Err(Error::Shape("sequences differ in feature count".into()));
            }
            for row in s.values.rows() {
                for (c, &x) in row.iter().enumerate() {
                    sum[c] += x;
                    sq[c] += x * x;
                }
                n += 1.0;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var.sqrt() > 1e-9 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Normalizer { mean, std })
    }

    pub fn identity(features: usize) -> Self {
        Normalizer {
            mean: vec![0.0; features],
            std: vec![1.0; features],
        }
    }

    pub fn features(&self) -> usize {
        self.mean.len()
    }

    pub fn apply<T: Scalar>(&self, raw: &RealSequence<f64>) -> Result<RealSequence<T>> {
        self.check(raw.features())?;
        RealSequence::new(Array2::from_shape_fn(raw.values.dim(), |(t, c)| {
            T::of((raw.values[[t, c]] - self.mean[c]) / self.std[c])
        }))
    }

    pub fn invert<T: Scalar>(&self, scaled: &Array2<T>) -> Result<Array2<f64>> {
        self.check(scaled.ncols())?;
        Ok(Array2::from_shape_fn(scaled.dim(), |(t, c)| {
            scaled[[t, c]].to_f64_lossy() * self.std[c] + self.mean[c]
        }))
    }

    fn check(&self, features: usize) -> Result<()> {
        if features != self.features() {
            return Err(Error::Shape(format!(
                "normalizer has {} features, data has {features}",
                self.features()
            )));
        }
        Ok(())
    }
}
