use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse feature vector: strictly increasing indices, no stored zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds from `(index, value)` pairs in any order; duplicates are summed
    /// and zeros dropped.
    pub fn from_pairs<I>(dim: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::InvalidArgument(format!(
                    "index {i} out of range for dimension {dim}"
                )));
            }
            entries.push((i as u32, v));
        }
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        Ok(SparseVector { dim, entries: merged })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().map(|&(i, v)| (i as usize, v))
    }

    /// Value at `index`; absent entries read as 0.0.
    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(index as u32), |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Squared Euclidean distance, merging the two index lists.
    pub fn squared_distance(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < a.len() || j < b.len() {
            let d = match (a.get(i), b.get(j)) {
                (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                    i += 1;
                    j += 1;
                    va - vb
                }
                (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    va
                }
                (Some(_), Some(&(_, vb))) => {
                    j += 1;
                    vb
                }
                (Some(&(_, va)), None) => {
                    i += 1;
                    va
                }
                (None, Some(&(_, vb))) => {
                    j += 1;
                    vb
                }
                (None, None) => unreachable!(),
            };
            acc += d * d;
        }
        acc
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
    }

    /// Appends `other` after this vector's dimensions.
    pub fn concat(&self, other: &SparseVector) -> SparseVector {
        let offset = self.dim as u32;
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|&(i, v)| (i + offset, v)));
        SparseVector {
            dim: self.dim + other.dim,
            entries,
        }
    }
}
