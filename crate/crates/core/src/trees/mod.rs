//! Decision-tree ensembles: Newton gradient boosting, Gini random forests,
//! k-nearest neighbors, and attribution over boosted trees.

mod explain;
mod forest;
mod gbdt;
mod knn;
mod tree;

pub use explain::{decompose_prediction, feature_importance, Decomposition, FeatureImportance};
pub use forest::{best_gini_split, fit_random_forest, ClassTree, ForestParams, GiniSplit, MaxFeatures, RandomForestModel};
pub use gbdt::{fit_gbdt, fit_gbdt_with_history, log_loss, sigmoid, softmax, GbdtModel, GbdtParams, Objective};
pub use knn::{knn_predict, KnnModel};
pub use tree::{fit_tree, leaf_weight, split_gain, DecisionTree, Node, Tree, TreeParams};
