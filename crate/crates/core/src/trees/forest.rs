//! Random forest of Gini classification trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

/// How many features each split considers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, n_features: usize) -> usize {
        let n = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().round() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Count(c) => c,
        };
        n.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    /// 500 trees, depth 100, Gini, min split 2, min leaf 1.
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            max_depth: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 42,
        }
    }
}

/// Leaves hold the majority class of their training samples.
pub type ClassTree = Tree<usize>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<ClassTree>,
}

impl RandomForestModel {
    /// Fraction of trees voting for each class.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.dim(),
            });
        }
        let mut votes = vec![0.0; self.n_classes];
        for tree in &self.trees {
            votes[*tree.predict(x)] += 1.0;
        }
        let n = self.trees.len().max(1) as f64;
        Ok(votes.into_iter().map(|v| v / n).collect())
    }

    /// Majority vote; ties go to the lower class.
    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        Ok(super::gbdt::argmax(&self.predict_proba(x)?))
    }
}

pub fn fit_random_forest(
    x: &[SparseVector],
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
) -> Result<RandomForestModel> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot grow a forest on zero samples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!("{} samples but {} labels", x.len(), y.len())));
    }
    if let Some(c) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {c} out of range for {n_classes} classes")));
    }
    let n_features = x[0].dim();
    if let Some(bad) = x.iter().find(|r| r.dim() != n_features) {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            actual: bad.dim(),
        });
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidArgument("forest needs at least one tree".into()));
    }
    // dense columns: forests here run on low-dimensional downstream features
    let dense: Vec<Vec<f64>> = x.iter().map(SparseVector::to_dense).collect();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
            } else {
                (0..x.len()).collect()
            };
            grow_tree(&dense, y, n_classes, rows, params, &mut rng)
        })
        .collect();
    Ok(RandomForestModel {
        n_classes,
        n_features,
        trees,
    })
}

/// Best split of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GiniSplit {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted child impurity `n_L·gini_L + n_R·gini_R`.
    pub child_impurity: f64,
}

fn gini_mass(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

/// Exhaustive Gini split search over `features` for the samples `rows`.
///
/// Minimizes weighted child impurity; ties go to the lowest feature index,
/// then the lowest threshold. Thresholds are midpoints between adjacent
/// distinct values and samples with `value < threshold` go left.
pub fn best_gini_split(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    rows: &[usize],
    features: &[usize],
    min_samples_leaf: usize,
) -> Option<GiniSplit> {
    let n = rows.len();
    let mut total = vec![0usize; n_classes];
    for &r in rows {
        total[y[r]] += 1;
    }
    let mut best: Option<GiniSplit> = None;
    let mut values: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        values.clear();
        values.extend(rows.iter().map(|&r| (x[r][f], y[r])));
        values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut left = vec![0usize; n_classes];
        for i in 0..n.saturating_sub(1) {
            left[values[i].1] += 1;
            let (a, b) = (values[i].0, values[i + 1].0);
            let n_left = i + 1;
            if a == b || n_left < min_samples_leaf || n - n_left < min_samples_leaf {
                continue;
            }
            let right: Vec<usize> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
            let impurity = gini_mass(&left, n_left) + gini_mass(&right, n - n_left);
            let mid = 0.5 * (a + b);
            let threshold = if mid > a { mid } else { b };
            let better = match best {
                None => true,
                Some(cur) => {
                    impurity < cur.child_impurity
                        || (impurity == cur.child_impurity
                            && (f, threshold) < (cur.feature, cur.threshold))
                }
            };
            if better {
                best = Some(GiniSplit {
                    feature: f,
                    threshold,
                    child_impurity: impurity,
                });
            }
        }
    }
    best
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}

fn grow_tree(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    rows: Vec<usize>,
    params: &ForestParams,
    rng: &mut ChaCha8Rng,
) -> ClassTree {
    let n_features = x[0].len();
    let mtry = params.max_features.resolve(n_features);
    let mut tree = ClassTree::leaf(0, 0.0);
    // (node id, rows, depth)
    let mut stack = vec![(0u32, rows, 0usize)];
    let mut order: Vec<usize> = (0..n_features).collect();

    while let Some((id, rows, depth)) = stack.pop() {
        let mut counts = vec![0usize; n_classes];
        for &r in &rows {
            counts[y[r]] += 1;
        }
        let n = rows.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let leaf = Node::Leaf {
            value: majority(&counts),
            cover: n as f64,
        };
        if pure || depth >= params.max_depth || n < params.min_samples_split.max(2) {
            tree.set(id, leaf);
            continue;
        }
        // draw mtry features; keep drawing past mtry until one yields a split
        order.shuffle(rng);
        let mut split = best_gini_split(x, y, n_classes, &rows, &order[..mtry], params.min_samples_leaf);
        let mut next = mtry;
        while split.is_none() && next < n_features {
            split = best_gini_split(x, y, n_classes, &rows, &order[next..next + 1], params.min_samples_leaf);
            next += 1;
        }
        let Some(s) = split else {
            tree.set(id, leaf);
            continue;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| x[r][s.feature] < s.threshold);
        let left = tree.push(Node::Leaf { value: 0, cover: 0.0 });
        let right = tree.push(Node::Leaf { value: 0, cover: 0.0 });
        tree.set(
            id,
            Node::Split {
                feature: s.feature as u32,
                threshold: s.threshold,
                left,
                right,
                gain: gini_mass(&counts, n) - s.child_impurity,
                cover: n as f64,
            },
        );
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    tree
}
