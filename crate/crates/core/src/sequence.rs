use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Fixed-length token sample; positions at or past `true_length` hold the pad id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Builds a sequence from raw ids, taking the first pad as the end.
    pub fn from_ids(ids: Vec<usize>, pad_id: usize) -> Self {
        let true_length = ids.iter().position(|&i| i == pad_id).unwrap_or(ids.len());
        TokenSequence { ids, true_length }
    }

    pub fn is_valid(&self, vocab_size: usize, pad_id: usize) -> bool {
        self.true_length <= self.ids.len()
            && self.ids.iter().all(|&i| i < vocab_size)
            && self.ids[self.true_length..].iter().all(|&i| i == pad_id)
    }

    /// Number of positions that carry a likelihood term: the real tokens plus
    /// the first pad, which marks the end of the sentence.
    pub fn scored_length(&self) -> usize {
        (self.true_length + 1).min(self.ids.len())
    }
}

/// `T × F` matrix of real-valued features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RealSequence<T> {
    pub values: Array2<T>,
}

impl<T: Scalar> RealSequence<T> {
    pub fn new(values: Array2<T>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Shape(format!(
                "non-finite entry at row {}, column {}",
                pos / values.ncols().max(1),
                pos % values.ncols().max(1)
            )));
        }
        Ok(RealSequence { values })
    }

    pub fn steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn features(&self) -> usize {
        self.values.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scored_length_counts_the_end_marker() {
        let s = TokenSequence::from_ids(vec![4, 5, 0, 0], 0);
        assert_eq!(s.true_length, 2);
        assert_eq!(s.scored_length(), 3);
        let full = TokenSequence::from_ids(vec![4, 5, 6], 0);
        assert_eq!(full.scored_length(), 3);
    }

    #[test]
    fn real_sequence_rejects_nan() {
        let mut m = Array2::<f64>::zeros((3, 2));
        assert!(RealSequence::new(m.clone()).is_ok());
        m[[1, 1]] = f64::NAN;
        assert!(RealSequence::new(m).is_err());
    }
}
