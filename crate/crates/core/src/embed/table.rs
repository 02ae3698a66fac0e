use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

/// Fixed-width real vectors indexed by dense id (user or word).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(count: usize, dim: usize) -> Self {
        EmbeddingTable { dim, data: vec![0.0; count * dim] }
    }

    pub fn from_data(count: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != count * dim {
            return Err(Error::DimensionMismatch { expected: count * dim, found: data.len() });
        }
        Ok(EmbeddingTable { dim, data })
    }

    /// Entries uniform in `[-scale, scale)`.
    pub fn uniform<R: Rng>(count: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..count * dim).map(|_| rng.gen_range(-scale..scale)).collect();
        EmbeddingTable { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
