//! Gain-based feature importance and additive decomposition of raw scores.

use serde::{Deserialize, Serialize};

use super::gbdt::GbdtModel;
use super::tree::Node;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// Normalized total split gain per feature. All zeros when the model has no
/// split at all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub values: Vec<f64>,
}

impl FeatureImportance {
    /// Feature indices with positive importance, highest first; ties by index.
    pub fn ranked(&self) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self
            .values
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v > 0.0)
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked
    }
}

pub fn feature_importance(model: &GbdtModel) -> FeatureImportance {
    let mut values = vec![0.0; model.n_features];
    for tree in model.all_trees() {
        for node in tree.nodes() {
            if let Node::Split { feature, gain, .. } = node {
                values[*feature as usize] += gain;
            }
        }
    }
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        for v in &mut values {
            *v /= total;
        }
    }
    FeatureImportance { values }
}

/// `raw_score(x, output) = base + Σ contributions`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub base: f64,
    /// Dense, one entry per model feature.
    pub contributions: Vec<f64>,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.base + self.contributions.iter().sum::<f64>()
    }
}

/// Path decomposition of one raw score.
///
/// Walking each tree from the root to the leaf reached by `x`, the change in
/// expected node value (cover-weighted mean of descendant leaves) at every
/// step is credited to the feature split on. The base collects the model base
/// score and every root's expected value.
pub fn decompose_prediction(model: &GbdtModel, x: &SparseVector, output: usize) -> Result<Decomposition> {
    if output >= model.n_outputs() {
        return Err(Error::InvalidArgument(format!(
            "output {output} out of range for {} outputs",
            model.n_outputs()
        )));
    }
    if x.dim() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            actual: x.dim(),
        });
    }
    let eta = model.learning_rate;
    let mut base = model.base_score[output];
    let mut contributions = vec![0.0; model.n_features];
    for tree in model.output_trees(output) {
        let expected = tree.expected_values();
        let path = tree.path(x);
        base += eta * expected[0];
        for step in path.windows(2) {
            let (parent, child) = (step[0], step[1]);
            if let Node::Split { feature, .. } = &tree.nodes()[parent] {
                contributions[*feature as usize] += eta * (expected[child] - expected[parent]);
            }
        }
    }
    Ok(Decomposition { base, contributions })
}
