use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Uniform-weight k-nearest-neighbors classifier under Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    n_classes: usize,
    vectors: Vec<SparseVector>,
    labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(x: &[SparseVector], y: &[usize], n_classes: usize, k: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("k-NN needs at least one training vector".into()));
        }
        if x.len() != y.len() {
            return Err(Error::InvalidArgument(format!("{} samples but {} labels", x.len(), y.len())));
        }
        if k == 0 || k > x.len() {
            return Err(Error::InvalidArgument(format!(
                "k must be in 1..={}, got {k}",
                x.len()
            )));
        }
        if let Some(c) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidArgument(format!("label {c} out of range for {n_classes} classes")));
        }
        Ok(KnnModel {
            k,
            n_classes,
            vectors: x.to_vec(),
            labels: y.to_vec(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Vote counts among the k nearest points. Distance ties go to the lower
    /// training index.
    pub fn votes(&self, x: &SparseVector) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (v.squared_distance(x), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0; self.n_classes];
        for &(_, i) in dist.iter().take(self.k) {
            votes[self.labels[i]] += 1;
        }
        votes
    }

    /// Majority label; vote ties go to the lower class.
    pub fn predict(&self, x: &SparseVector) -> usize {
        let votes = self.votes(x);
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }
}

pub fn knn_predict(model: &KnnModel, x: &SparseVector) -> usize {
    model.predict(x)
}
