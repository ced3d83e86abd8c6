use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<L> {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        gain: f64,
        /// Training samples that reached the node.
        cover: f64,
    },
    Leaf {
        value: L,
        cover: f64,
    },
}

impl<L> Node<L> {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Binary tree stored as a node array with the root at index 0. Samples with
/// `x[feature] < threshold` go left; absent sparse entries read as 0.0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    nodes: Vec<Node<L>>,
}

/// Regression tree with real leaf values, as fit by gradient boosting.
pub type DecisionTree = Tree<f64>;

impl<L> Tree<L> {
    pub fn leaf(value: L, cover: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    /// Checks that children exist and come after their parent, which rules
    /// out cycles.
    pub fn from_nodes(nodes: Vec<Node<L>>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::format(None, "tree has no nodes"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                for child in [*left as usize, *right as usize] {
                    if child <= i || child >= self.nodes.len() {
                        return Err(Error::format(None, format!("node {i} has invalid child {child}")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node<L>] {
        &self.nodes
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Split { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn walk<L>(nodes: &[Node<L>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Node indices visited from the root to the leaf reached by `x`.
    pub fn path(&self, x: &SparseVector) -> Vec<usize> {
        let mut path = vec![0];
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &self.nodes[i]
        {
            i = if x.get(*feature as usize) < *threshold {
                *left as usize
            } else {
                *right as usize
            };
            path.push(i);
        }
        path
    }

    pub fn leaf_index(&self, x: &SparseVector) -> usize {
        let mut i = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &self.nodes[i]
        {
            i = if x.get(*feature as usize) < *threshold {
                *left as usize
            } else {
                *right as usize
            };
        }
        i
    }

    pub fn predict(&self, x: &SparseVector) -> &L {
        match &self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index stops at a leaf"),
        }
    }

    pub(crate) fn push(&mut self, node: Node<L>) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    pub(crate) fn set(&mut self, index: u32, node: Node<L>) {
        self.nodes[index as usize] = node;
    }
}

impl DecisionTree {
    /// Cover-weighted mean of descendant leaf values, for every node.
    pub fn expected_values(&self) -> Vec<f64> {
        let mut expected = vec![0.0; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            expected[i] = match &self.nodes[i] {
                Node::Leaf { value, .. } => *value,
                Node::Split { left, right, .. } => {
                    let (l, r) = (*left as usize, *right as usize);
                    let (cl, cr) = (self.nodes[l].cover(), self.nodes[r].cover());
                    if cl + cr > 0.0 {
                        (cl * expected[l] + cr * expected[r]) / (cl + cr)
                    } else {
                        0.5 * (expected[l] + expected[r])
                    }
                }
            };
        }
        expected
    }
}

/// Limits for one Newton regression tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 4,
            min_samples_leaf: 1,
            lambda: 1.0,
        }
    }
}

/// Column-major copy of a sparse design matrix, each column sorted by value
/// and then row.
pub(crate) struct ColumnMatrix<'a> {
    pub rows: &'a [SparseVector],
    pub columns: Vec<Vec<(u32, f64)>>,
}

impl<'a> ColumnMatrix<'a> {
    pub fn new(rows: &'a [SparseVector]) -> Result<Self> {
        let dim = rows.first().map_or(0, SparseVector::dim);
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for (r, x) in rows.iter().enumerate() {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: x.dim(),
                });
            }
            for (f, v) in x.iter() {
                columns[f].push((r as u32, v));
            }
        }
        for col in &mut columns {
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        }
        Ok(ColumnMatrix { rows, columns })
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }
}

/// Split gain `½[GL²/(HL+λ) + GR²/(HR+λ) − G²/(H+λ)]`.
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr))
}

/// Optimal leaf value `−G/(H+λ)`.
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    -g / (h + lambda)
}

/// Fits one regression tree to gradients and hessians with exact greedy
/// split search.
///
/// Splits maximize [`split_gain`]; only strictly positive gains are taken.
/// Ties go to the lowest feature index, then the lowest threshold.
pub fn fit_tree(x: &[SparseVector], grad: &[f64], hess: &[f64], params: &TreeParams) -> Result<DecisionTree> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a tree to zero samples".into()));
    }
    if grad.len() != x.len() || hess.len() != x.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} gradients and {} hessians",
            x.len(),
            grad.len(),
            hess.len()
        )));
    }
    if let Some(h) = hess.iter().find(|h| h.is_nan() || **h < 0.0) {
        return Err(Error::InvalidArgument(format!("hessians must be non-negative, got {h}")));
    }
    let columns = ColumnMatrix::new(x)?;
    Ok(build_newton_tree(&columns, grad, hess, None, params))
}

#[derive(Clone, Copy, Default)]
struct Stats {
    g: f64,
    h: f64,
    n: usize,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64, n: usize) {
        self.g += g;
        self.h += h;
        self.n += n;
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Per-slot running state while scanning one column.
#[derive(Clone, Copy, Default)]
struct Scan {
    left: Stats,
    last: f64,
}

const INACTIVE: u32 = u32::MAX;

/// Level-wise exact greedy induction. `active` restricts training to a row
/// subset (row subsampling); `None` uses every row.
pub(crate) fn build_newton_tree(
    data: &ColumnMatrix<'_>,
    grad: &[f64],
    hess: &[f64],
    active: Option<&[bool]>,
    params: &TreeParams,
) -> DecisionTree {
    let n_rows = data.rows.len();
    let lambda = params.lambda;
    let min_leaf = params.min_samples_leaf.max(1);

    let mut row_slot = vec![0u32; n_rows];
    let mut root = Stats::default();
    for r in 0..n_rows {
        if active.is_some_and(|a| !a[r]) {
            row_slot[r] = INACTIVE;
        } else {
            root.add(grad[r], hess[r], 1);
        }
    }

    let mut tree = Tree { nodes: Vec::new() };
    let placeholder = |stats: Stats| Node::Leaf {
        value: leaf_weight(stats.g, stats.h, lambda),
        cover: stats.n as f64,
    };
    let root_id = tree.push(placeholder(root));
    // (node id, stats) for every slot of the current level
    let mut level: Vec<(u32, Stats)> = vec![(root_id, root)];
    let mut depth = 0;

    while !level.is_empty() {
        let splittable: Vec<bool> = level
            .iter()
            .map(|(_, s)| depth < params.max_depth && s.n >= 2 * min_leaf)
            .collect();
        let mut best: Vec<Option<Candidate>> = vec![None; level.len()];

        if splittable.iter().any(|&s| s) {
            let mut nonzero = vec![Stats::default(); level.len()];
            let mut scan = vec![Scan::default(); level.len()];
            let mut touched: Vec<u32> = Vec::new();

            for (feature, column) in data.columns.iter().enumerate() {
                touched.clear();
                for &(r, _) in column {
                    let slot = row_slot[r as usize];
                    if slot == INACTIVE || !splittable[slot as usize] {
                        continue;
                    }
                    let s = &mut nonzero[slot as usize];
                    if s.n == 0 {
                        touched.push(slot);
                    }
                    s.add(grad[r as usize], hess[r as usize], 1);
                }
                if touched.is_empty() {
                    continue;
                }

                let mut visit = |slot: usize, value: f64, g: f64, h: f64, n: usize, best: &mut [Option<Candidate>]| {
                    let total = level[slot].1;
                    let st = &mut scan[slot];
                    if st.left.n > 0 && value > st.last {
                        let (l, n_right) = (st.left, total.n - st.left.n);
                        if l.n >= min_leaf && n_right >= min_leaf {
                            let gain = split_gain(l.g, l.h, total.g - l.g, total.h - l.h, lambda);
                            if gain > best[slot].map_or(0.0, |c| c.gain) {
                                let mid = 0.5 * (st.last + value);
                                let threshold = if mid > st.last { mid } else { value };
                                best[slot] = Some(Candidate {
                                    feature,
                                    threshold,
                                    gain,
                                });
                            }
                        }
                    }
                    st.left.add(g, h, n);
                    st.last = value;
                };

                let first_positive = column.partition_point(|&(_, v)| v < 0.0);
                let entry = |&(r, v): &(u32, f64)| {
                    let slot = row_slot[r as usize];
                    (slot != INACTIVE && splittable[slot as usize])
                        .then(|| (slot as usize, v, grad[r as usize], hess[r as usize], 1))
                };
                // implicit zeros of each node enter as one block
                let zeros = |&slot: &u32| {
                    let slot = slot as usize;
                    let (total, nz) = (level[slot].1, nonzero[slot]);
                    (total.n > nz.n).then(|| (slot, 0.0, total.g - nz.g, total.h - nz.h, total.n - nz.n))
                };
                let events = column[..first_positive]
                    .iter()
                    .filter_map(entry)
                    .chain(touched.iter().filter_map(zeros))
                    .chain(column[first_positive..].iter().filter_map(entry));
                for (slot, value, g, h, n) in events {
                    visit(slot, value, g, h, n, &mut best);
                }

                for &slot in &touched {
                    nonzero[slot as usize] = Stats::default();
                    scan[slot as usize] = Scan::default();
                }
            }
        }

        // materialize the level
        let mut next: Vec<(u32, Stats)> = Vec::new();
        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; level.len()];
        let mut child_stats: Vec<(Stats, Stats)> = vec![(Stats::default(), Stats::default()); level.len()];
        for r in 0..n_rows {
            let slot = row_slot[r];
            if slot == INACTIVE {
                continue;
            }
            if let Some(c) = best[slot as usize] {
                let goes_left = data.rows[r].get(c.feature) < c.threshold;
                let stats = &mut child_stats[slot as usize];
                if goes_left {
                    stats.0.add(grad[r], hess[r], 1);
                } else {
                    stats.1.add(grad[r], hess[r], 1);
                }
            }
        }
        for (slot, ((node_id, stats), cand)) in level.iter().zip(&best).enumerate() {
            let Some(c) = cand else { continue };
            let (ls, rs) = child_stats[slot];
            let left = tree.push(placeholder(ls));
            let right = tree.push(placeholder(rs));
            tree.set(
                *node_id,
                Node::Split {
                    feature: c.feature as u32,
                    threshold: c.threshold,
                    left,
                    right,
                    gain: c.gain,
                    cover: stats.n as f64,
                },
            );
            let l_slot = next.len() as u32;
            next.push((left, ls));
            next.push((right, rs));
            child_slots[slot] = Some((l_slot, l_slot + 1));
        }
        for (r, slot_ref) in row_slot.iter_mut().enumerate() {
            let slot = *slot_ref;
            if slot == INACTIVE {
                continue;
            }
            *slot_ref = match (best[slot as usize], child_slots[slot as usize]) {
                (Some(c), Some((l, rr))) => {
                    if data.rows[r].get(c.feature) < c.threshold {
                        l
                    } else {
                        rr
                    }
                }
                _ => INACTIVE,
            };
        }
        level = next;
        depth += 1;
    }
    tree
}
