//! Newton gradient boosting for multi-class (softmax) and binary logistic
//! objectives.
//!
//! The raw score of output `k` is `base_k + η · Σ_rounds tree_{r,k}(x)`. Each
//! round fits one tree per output to the gradients `p − y` and hessians
//! `p(1 − p)` of the log-loss at the current scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{build_newton_tree, ColumnMatrix, DecisionTree, TreeParams};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Softmax,
    BinaryLogistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_samples_leaf: usize,
    pub objective: Objective,
    /// Fraction of rows sampled per round; 1.0 uses every row.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbdtParams {
    /// Negation detector defaults.
    fn default() -> Self {
        GbdtParams {
            rounds: 200,
            max_depth: 4,
            learning_rate: 0.1,
            lambda: 1.0,
            min_samples_leaf: 1,
            objective: Objective::Softmax,
            subsample: 1.0,
            seed: 42,
        }
    }
}

impl GbdtParams {
    /// 500 estimators, depth 100, learning rate 0.1, binary logistic.
    pub fn downstream() -> Self {
        GbdtParams {
            rounds: 500,
            max_depth: 100,
            learning_rate: 0.1,
            lambda: 1.0,
            min_samples_leaf: 1,
            objective: Objective::BinaryLogistic,
            subsample: 1.0,
            seed: 42,
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            lambda: self.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub objective: Objective,
    pub n_classes: usize,
    pub n_features: usize,
    pub learning_rate: f64,
    /// One entry per output.
    pub base_score: Vec<f64>,
    /// `trees[round][output]`.
    pub trees: Vec<Vec<DecisionTree>>,
}

impl GbdtModel {
    /// A model with no trees and zero base scores: uniform probabilities.
    pub fn untrained(objective: Objective, n_classes: usize, n_features: usize, learning_rate: f64) -> Self {
        let outputs = match objective {
            Objective::Softmax => n_classes,
            Objective::BinaryLogistic => 1,
        };
        GbdtModel {
            objective,
            n_classes,
            n_features,
            learning_rate,
            base_score: vec![0.0; outputs],
            trees: Vec::new(),
        }
    }

    /// Number of raw scores: K for softmax, 1 (the positive-class margin) for
    /// binary logistic.
    pub fn n_outputs(&self) -> usize {
        self.base_score.len()
    }

    pub fn rounds(&self) -> usize {
        self.trees.len()
    }

    /// Trees contributing to output `k`, in round order.
    pub fn output_trees(&self, k: usize) -> impl Iterator<Item = &DecisionTree> {
        self.trees.iter().map(move |round| &round[k])
    }

    pub fn all_trees(&self) -> impl Iterator<Item = &DecisionTree> {
        self.trees.iter().flatten()
    }

    fn check_dim(&self, x: &SparseVector) -> Result<()> {
        if x.dim() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    pub fn raw_scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.raw_scores_unchecked(x))
    }

    fn raw_scores_unchecked(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_outputs())
            .map(|k| {
                let sum: f64 = self.output_trees(k).map(|t| *t.predict(x)).sum();
                self.base_score[k] + self.learning_rate * sum
            })
            .collect()
    }

    pub fn raw_score(&self, x: &SparseVector, output: usize) -> Result<f64> {
        if output >= self.n_outputs() {
            return Err(Error::InvalidArgument(format!(
                "output {output} out of range for {} outputs",
                self.n_outputs()
            )));
        }
        Ok(self.raw_scores(x)?[output])
    }

    /// Class probabilities; two entries `[1 − p, p]` for binary logistic.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let raw = self.raw_scores(x)?;
        Ok(self.link(&raw))
    }

    fn link(&self, raw: &[f64]) -> Vec<f64> {
        match self.objective {
            Objective::Softmax => softmax(raw),
            Objective::BinaryLogistic => {
                let p = sigmoid(raw[0]);
                vec![1.0 - p, p]
            }
        }
    }

    /// Most probable class; ties go to the lower index.
    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean negative log-likelihood of the true classes.
pub fn log_loss(probabilities: &[Vec<f64>], y: &[usize]) -> f64 {
    let total: f64 = probabilities
        .iter()
        .zip(y)
        .map(|(p, &c)| -p[c].max(1e-300).ln())
        .sum();
    total / y.len() as f64
}

pub fn fit_gbdt(x: &[SparseVector], y: &[usize], n_classes: usize, params: &GbdtParams) -> Result<GbdtModel> {
    fit_gbdt_with_history(x, y, n_classes, params).map(|(m, _)| m)
}

/// Also returns the training log-loss before the first round and after each
/// round.
pub fn fit_gbdt_with_history(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    params: &GbdtParams,
) -> Result<(GbdtModel, Vec<f64>)> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot boost on zero samples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} samples but {} labels", x.len(), y.len())));
    }
    if params.objective == Objective::BinaryLogistic && n_classes != 2 {
        return Err(Error::InvalidArgument("binary logistic objective needs exactly 2 classes".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {n_classes}")));
    }
    if let Some(c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {c} out of range for {n_classes} classes")));
    }
    if !(params.subsample > 0.0 && params.subsample <= 1.0) {
        return Err(Error::InvalidArgument(format!("subsample must be in (0, 1], got {}", params.subsample)));
    }

    let data = ColumnMatrix::new(x)?;
    let mut model = GbdtModel::untrained(params.objective, n_classes, data.n_features(), params.learning_rate);
    let outputs = model.n_outputs();
    let tree_params = params.tree_params();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut raw: Vec<Vec<f64>> = vec![model.base_score.clone(); x.len()];
    let mut probs: Vec<Vec<f64>> = raw.iter().map(|r| model.link(r)).collect();
    let mut history = vec![log_loss(&probs, y)];

    let mut grad = vec![0.0; x.len()];
    let mut hess = vec![0.0; x.len()];
    for _ in 0..params.rounds {
        let mask: Option<Vec<bool>> =
            (params.subsample < 1.0).then(|| (0..x.len()).map(|_| rng.gen_bool(params.subsample)).collect());
        let mut round = Vec::with_capacity(outputs);
        for k in 0..outputs {
            // binary logistic scores the positive class on output 0
            let class = if outputs == 1 { 1 } else { k };
            for i in 0..x.len() {
                let p = probs[i][class];
                let target = if y[i] == class { 1.0 } else { 0.0 };
                grad[i] = p - target;
                hess[i] = p * (1.0 - p);
            }
            round.push(build_newton_tree(&data, &grad, &hess, mask.as_deref(), &tree_params));
        }
        for (i, row) in x.iter().enumerate() {
            for (k, tree) in round.iter().enumerate() {
                raw[i][k] += params.learning_rate * tree.predict(row);
            }
            probs[i] = model.link(&raw[i]);
        }
        model.trees.push(round);
        history.push(log_loss(&probs, y));
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> Vec<SparseVector> {
        values.iter().map(|&v| SparseVector::from_dense(&[v])).collect()
    }

    #[test]
    fn initial_softmax_gradient() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        let g: Vec<f64> = (0..3).map(|k| p[k] - if k == 0 { 1.0 } else { 0.0 }).collect();
        assert!((g[0] + 2.0 / 3.0).abs() < 1e-15);
        assert!((g[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((g[2] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_rounds_is_uniform() {
        let params = GbdtParams {
            rounds: 0,
            ..GbdtParams::default()
        };
        let model = fit_gbdt(&line(&[1.0, 2.0]), &[0, 1], 3, &params).unwrap();
        let p = model.predict_proba(&SparseVector::from_dense(&[5.0])).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn separable_binary_toy_set() {
        let x = line(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0, 0, 1, 1];
        for objective in [Objective::Softmax, Objective::BinaryLogistic] {
            let params = GbdtParams {
                rounds: 20,
                objective,
                ..GbdtParams::default()
            };
            let model = fit_gbdt(&x, &y, 2, &params).unwrap();
            let predicted: Vec<usize> = x.iter().map(|r| model.predict(r).unwrap()).collect();
            assert_eq!(predicted, y, "{objective:?}");
        }
    }

    #[test]
    fn loss_does_not_increase() {
        let x = line(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        let y = [0, 1, 0, 2, 2, 1];
        let (_, history) = fit_gbdt_with_history(&x, &y, 3, &GbdtParams::default()).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn single_class_predicts_that_class() {
        let model = fit_gbdt(&line(&[0.0, 1.0, 2.0]), &[2, 2, 2], 3, &GbdtParams::default()).unwrap();
        assert_eq!(model.predict(&SparseVector::from_dense(&[7.0])).unwrap(), 2);
    }

    #[test]
    fn errors() {
        let p = GbdtParams::default();
        assert!(fit_gbdt(&[], &[], 3, &p).is_err());
        assert!(fit_gbdt(&line(&[1.0]), &[3], 3, &p).is_err());
        let model = fit_gbdt(&line(&[1.0, 2.0]), &[0, 1], 3, &p).unwrap();
        assert!(matches!(
            model.predict_proba(&SparseVector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn subsampling_is_seeded() {
        let x = line(&[0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]);
        let y = [0, 1, 0, 1, 2, 2, 1, 0];
        let params = GbdtParams {
            subsample: 0.6,
            rounds: 10,
            ..GbdtParams::default()
        };
        let a = fit_gbdt(&x, &y, 3, &params).unwrap();
        let b = fit_gbdt(&x, &y, 3, &params).unwrap();
        assert_eq!(a, b);
    }
}
