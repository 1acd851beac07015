use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bijection on `{0..n-1}`, stored as the sequence `order[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n {
                return Err(Error::InvalidPermutation(format!(
                    "index {i} out of range for length {n}"
                )));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!("index {i} repeated")));
            }
        }
        Ok(Permutation(order))
    }

    pub(crate) fn new_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Permutation::new(order.clone()).is_ok());
        Permutation(order)
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn reversed(&self) -> Self {
        Permutation(self.0.iter().rev().copied().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    /// `inv[self[k]] = k`.
    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (k, &i) in self.0.iter().enumerate() {
            inv[i] = k;
        }
        Permutation(inv)
    }

    /// `(self ∘ other)[k] = self[other[k]]`.
    pub fn compose(&self, other: &Permutation) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(Permutation(other.0.iter().map(|&k| self.0[k]).collect()))
    }

    /// Items picked in sequence order: `out[k] = items[self[k]]`.
    pub fn gather<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        if self.len() != items.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: items.len(),
            });
        }
        Ok(self.0.iter().map(|&i| items[i].clone()).collect())
    }

    /// Items sent to their target slots: `out[self[k]] = items[k]`.
    pub fn scatter<T: Clone>(&self, items: &[T]) -> Result<Vec<T>> {
        self.inverse().gather(items)
    }
}

impl std::ops::Index<usize> for Permutation {
    type Output = usize;

    fn index(&self, k: usize) -> &usize {
        &self.0[k]
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}
