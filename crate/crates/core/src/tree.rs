//! Exact greedy regression trees over order-k derivative statistics.
//!
//! For every feature the rows of a node are walked in ascending feature
//! order, accumulating left-hand sums `G1..Gk`; right-hand sums are the node
//! totals minus the left. Each boundary between distinct feature values is a
//! candidate, scored by `score(left) + score(right) - score(node)` with the
//! configured-order leaf solver.
//!
//! Each feature keeps one array of row indices for the whole tree. A node owns
//! the same contiguous segment in every array, sorted by that feature, so a
//! split is a stable partition of the segment and no node is ever re-sorted.

use crate::data::{Dataset, RowSet};
use crate::error::{Error, Result};
use crate::leaf_solver::{
    solve_leaf, split_score, CubicMode, FourthOrderFormula, GradStats, Order, SolverConfig,
};
use crate::loss::{GradBundle, MAX_ORDER};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub solver: SolverConfig,
    pub max_depth: usize,
    pub min_child_rows: usize,
    /// A split is accepted only when its gain is strictly greater.
    pub min_gain: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            solver: SolverConfig::default(),
            max_depth: 6,
            min_child_rows: 1,
            min_gain: 0.0,
        }
    }
}

/// A tree node. Rows with `x[feature] < threshold` go left, all others right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
        row_count: usize,
    },
}

/// Nodes are stored in depth-first pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    depth: usize,
    n_leaves: usize,
}

impl Tree {
    pub fn leaf(weight: f64, row_count: usize) -> Self {
        Tree {
            nodes: vec![Node::Leaf { weight, row_count }],
            depth: 0,
            n_leaves: 1,
        }
    }

    /// Checks that `nodes` is a well-formed pre-order tree rooted at 0 and
    /// that every weight and threshold is finite.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Schema("tree has no nodes".into()));
        }
        let mut visited = vec![false; nodes.len()];
        let mut depth = 0;
        let mut n_leaves = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((index, level)) = stack.pop() {
            let node = nodes
                .get(index)
                .ok_or_else(|| Error::Schema(format!("child index {index} out of range")))?;
            if std::mem::replace(&mut visited[index], true) {
                return Err(Error::Schema(format!("node {index} reached twice")));
            }
            match *node {
                Node::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::NonFinite(format!("threshold of node {index}")));
                    }
                    stack.push((right, level + 1));
                    stack.push((left, level + 1));
                }
                Node::Leaf { weight, .. } => {
                    if !weight.is_finite() {
                        return Err(Error::NonFinite(format!("weight of node {index}")));
                    }
                    depth = depth.max(level);
                    n_leaves += 1;
                }
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return Err(Error::Schema(format!("node {orphan} is unreachable")));
        }
        Ok(Tree {
            nodes,
            depth,
            n_leaves,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    /// Leaf weights in pre-order.
    pub fn leaf_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { weight, .. } => Some(*weight),
            Node::Split { .. } => None,
        })
    }

    /// Routes one row given by a feature accessor.
    #[inline]
    pub fn route(&self, feature_value: impl Fn(usize) -> f64) -> f64 {
        let mut index = 0;
        loop {
            match self.nodes[index] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    index = if feature_value(feature) < threshold {
                        left
                    } else {
                        right
                    };
                }
                Node::Leaf { weight, .. } => return weight,
            }
        }
    }

    /// Leaf weight for `row` of a column-major feature matrix.
    #[inline]
    pub fn predict_column_row(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        self.route(|f| columns[f][row])
    }

    /// Largest feature index referenced by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

pub fn predict_tree(tree: &Tree, features: &[f64]) -> Result<f64> {
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature {i}")));
    }
    if let Some(max) = tree.max_feature() {
        if max >= features.len() {
            return Err(Error::FeatureCountMismatch {
                expected: max + 1,
                found: features.len(),
            });
        }
    }
    Ok(tree.route(|f| features[f]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitDecision {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left_stats: GradStats,
    pub right_stats: GradStats,
}

/// A grown tree plus the number of leaves whose weight fell back to Newton.
#[derive(Debug, Clone)]
pub struct TreeBuild {
    pub tree: Tree,
    pub fallback_count: usize,
}

/// Threshold strictly above `lo` and at most `hi`, normally their midpoint.
#[inline]
fn split_threshold(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * lo + 0.5 * hi;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Scratch buffers for growing trees, reusable across rounds on data of the
/// same shape.
#[derive(Debug, Default)]
pub struct TreeWorkspace {
    /// Per feature: row indices, each node's segment sorted by that feature.
    orders: Vec<Vec<u32>>,
    /// Feature values laid out like `orders`.
    values: Vec<Vec<f64>>,
    scratch: Vec<u32>,
    scratch_values: Vec<f64>,
    /// Per derivative order: running left-hand sums along one segment.
    prefix: [Vec<f64>; MAX_ORDER],
    gains: Vec<f64>,
    goes_left: Vec<bool>,
}

impl TreeWorkspace {
    pub fn new() -> Self {
        TreeWorkspace::default()
    }

    fn load(&mut self, data: &Dataset, rows: &RowSet) {
        let n_features = data.n_features();
        self.orders.resize_with(n_features, Vec::new);
        self.values.resize_with(n_features, Vec::new);
        let full = rows.len() == data.n_rows();
        if !full {
            self.goes_left.clear();
            self.goes_left.resize(data.n_rows(), false);
            for &r in rows.indices() {
                self.goes_left[r as usize] = true;
            }
        }
        for f in 0..n_features {
            let (order, values) = (&mut self.orders[f], &mut self.values[f]);
            order.clear();
            values.clear();
            if full {
                // A row set without repeats that is as long as the data is all of it.
                order.extend_from_slice(data.sort_index(f));
                values.extend_from_slice(data.sorted_values(f));
            } else {
                for (&r, &v) in data.sort_index(f).iter().zip(data.sorted_values(f)) {
                    if self.goes_left[r as usize] {
                        order.push(r);
                        values.push(v);
                    }
                }
            }
        }
        let len = rows.len();
        self.scratch.resize(len, 0);
        self.scratch_values.resize(len, 0.0);
        for column in &mut self.prefix {
            column.resize(len, 0.0);
        }
        self.gains.resize(len, 0.0);
        self.goes_left.resize(data.n_rows(), false);
    }
}

struct Builder<'a> {
    data: &'a Dataset,
    grads: &'a GradBundle,
    config: &'a TreeConfig,
    work: &'a mut TreeWorkspace,
    nodes: Vec<Node>,
    depth: usize,
    n_leaves: usize,
    fallbacks: usize,
}

impl<'a> Builder<'a> {
    fn new(
        data: &'a Dataset,
        rows: &RowSet,
        grads: &'a GradBundle,
        config: &'a TreeConfig,
        work: &'a mut TreeWorkspace,
    ) -> Result<Self> {
        if grads.len() != data.n_rows() {
            return Err(Error::LengthMismatch(format!(
                "{} gradient rows for {} data rows",
                grads.len(),
                data.n_rows()
            )));
        }
        work.load(data, rows);
        Ok(Builder {
            data,
            grads,
            config,
            work,
            nodes: Vec::new(),
            depth: 0,
            n_leaves: 0,
            fallbacks: 0,
        })
    }

    fn best_split(
        &mut self,
        start: usize,
        end: usize,
        node: &GradStats,
    ) -> Result<Option<SplitDecision>> {
        let solver = self.config.solver;
        let min_child = self.config.min_child_rows.max(1);
        if end - start < 2 * min_child {
            return Ok(None);
        }
        let parent_score = solve_leaf(node, &solver)?.score;
        // One copy of the scan per solver variant, so the scorer's branches
        // on order and mode fold away.
        macro_rules! scan_as {
            ($k:literal, $order:expr, $cubic:expr, $fourth:expr) => {{
                let fixed = SolverConfig {
                    order: $order,
                    cubic_mode: $cubic,
                    fourth_order_formula: $fourth,
                    ..solver
                };
                self.scan::<$k>(start, end, node, parent_score, fixed)
            }};
        }
        use CubicMode::*;
        use FourthOrderFormula::*;
        Ok(
            match (solver.order, solver.cubic_mode, solver.fourth_order_formula) {
                (Order::Second, ..) => scan_as!(2, Order::Second, Halley, Classical),
                (Order::Third, Halley, _) => scan_as!(3, Order::Third, Halley, Classical),
                (Order::Third, ExactRoot, _) => scan_as!(3, Order::Third, ExactRoot, Classical),
                (Order::Third, Series, _) => scan_as!(3, Order::Third, Series, Classical),
                (Order::Fourth, _, Classical) => scan_as!(4, Order::Fourth, Halley, Classical),
                (Order::Fourth, _, PaperLiteral) => {
                    scan_as!(4, Order::Fourth, Halley, PaperLiteral)
                }
            },
        )
    }

    /// Scores every candidate of every feature. `K` is the number of
    /// derivative orders the scorer reads.
    #[inline(always)]
    fn scan<const K: usize>(
        &mut self,
        start: usize,
        end: usize,
        node: &GradStats,
        parent_score: f64,
        solver: SolverConfig,
    ) -> Option<SplitDecision> {
        let min_child = self.config.min_child_rows.max(1);
        let len = end - start;
        // Candidate i puts positions 0..=i of the segment on the left.
        let (lo, hi) = (min_child - 1, len - min_child);
        let grads = self.grads.rows();
        let TreeWorkspace {
            orders,
            values,
            prefix,
            gains,
            ..
        } = &mut *self.work;
        let mut best: Option<(usize, usize)> = None;
        let mut best_gain = self.config.min_gain;
        for feature in 0..orders.len() {
            let segment = &orders[feature][start..end];
            let mut acc = [0.0f64; MAX_ORDER];
            for (i, &row) in segment.iter().enumerate() {
                let g = &grads[row as usize];
                for k in 0..K {
                    acc[k] += g[k];
                    prefix[k][i] = acc[k];
                }
            }
            let [p1, p2, p3, p4] = prefix;
            let (p1, p2, p3, p4) = (&p1[lo..hi], &p2[lo..hi], &p3[lo..hi], &p4[lo..hi]);
            for (j, gain) in gains[lo..hi].iter_mut().enumerate() {
                let left = GradStats {
                    g: [
                        p1[j],
                        p2[j],
                        if K > 2 { p3[j] } else { 0.0 },
                        if K > 3 { p4[j] } else { 0.0 },
                    ],
                    count: 0,
                };
                let mut right = left;
                for k in 0..MAX_ORDER {
                    right.g[k] = node.g[k] - left.g[k];
                }
                *gain = split_score(&left, &solver) + split_score(&right, &solver) - parent_score;
            }
            let feature_values = &values[feature][start..end];
            for i in lo..hi {
                if gains[i] > best_gain && feature_values[i] != feature_values[i + 1] {
                    best_gain = gains[i];
                    best = Some((feature, i));
                }
            }
        }
        best.map(|(feature, i)| {
            let left = GradStats::sum_rows(
                orders[feature][start..=start + i]
                    .iter()
                    .map(|&r| &grads[r as usize]),
            );
            let feature_values = &values[feature][start..end];
            SplitDecision {
                feature,
                threshold: split_threshold(feature_values[i], feature_values[i + 1]),
                gain: best_gain,
                left_stats: left,
                right_stats: *node - left,
            }
        })
    }

    /// Stable-partitions the segment in every feature order; returns the
    /// first index of the right child.
    fn partition(&mut self, start: usize, end: usize, split: &SplitDecision) -> usize {
        let work = &mut *self.work;
        let column = self.data.column(split.feature);
        for &row in &work.orders[split.feature][start..end] {
            work.goes_left[row as usize] = column[row as usize] < split.threshold;
        }
        let mut mid = start;
        let scratch = &mut work.scratch[..end - start];
        let scratch_values = &mut work.scratch_values[..end - start];
        for (order, values) in work.orders.iter_mut().zip(&mut work.values) {
            // Branch-free: every element is written to both destinations and
            // only the matching cursor advances.
            let mut write = start;
            let mut spill = 0;
            for read in start..end {
                let row = order[read];
                let value = values[read];
                let left = work.goes_left[row as usize];
                order[write] = row;
                values[write] = value;
                scratch[spill] = row;
                scratch_values[spill] = value;
                write += usize::from(left);
                spill += usize::from(!left);
            }
            order[write..end].copy_from_slice(&scratch[..spill]);
            values[write..end].copy_from_slice(&scratch_values[..spill]);
            mid = write;
        }
        mid
    }

    fn grow(&mut self, start: usize, end: usize, stats: GradStats, level: usize) -> Result<usize> {
        let index = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: 0.0,
            row_count: 0,
        });
        if level < self.config.max_depth {
            if let Some(split) = self.best_split(start, end, &stats)? {
                // Children at the depth limit become leaves, which only need
                // their row counts.
                let mid = if level + 1 < self.config.max_depth {
                    self.partition(start, end, &split)
                } else {
                    start + split.left_stats.count
                };
                debug_assert_eq!(mid - start, split.left_stats.count);
                let left = self.grow(start, mid, split.left_stats, level + 1)?;
                let right = self.grow(mid, end, split.right_stats, level + 1)?;
                self.nodes[index] = Node::Split {
                    feature: split.feature,
                    threshold: split.threshold,
                    left,
                    right,
                };
                return Ok(index);
            }
        }
        let solution = solve_leaf(&stats, &self.config.solver)?;
        if !solution.weight.is_finite() {
            return Err(Error::NonFinite(format!("leaf weight at node {index}")));
        }
        if solution.diagnostics.fallback_used {
            self.fallbacks += 1;
        }
        self.nodes[index] = Node::Leaf {
            weight: solution.weight,
            row_count: end - start,
        };
        self.depth = self.depth.max(level);
        self.n_leaves += 1;
        Ok(index)
    }
}

fn node_stats(rows: &RowSet, grads: &GradBundle) -> GradStats {
    GradStats::sum_rows(rows.indices().iter().map(|&r| grads.row(r as usize)))
}

fn check_rows(data: &Dataset, rows: &RowSet) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = rows
        .indices()
        .iter()
        .find(|&&r| r as usize >= data.n_rows())
    {
        return Err(Error::InvalidConfig(format!("row {bad} out of bounds")));
    }
    Ok(())
}

/// Best split of `rows`, or `None` when no candidate beats `min_gain`.
/// Ties go to the lower feature index, then the lower threshold.
pub fn find_best_split(
    data: &Dataset,
    rows: &RowSet,
    grads: &GradBundle,
    config: &TreeConfig,
) -> Result<Option<SplitDecision>> {
    check_rows(data, rows)?;
    let mut work = TreeWorkspace::new();
    let mut builder = Builder::new(data, rows, grads, config, &mut work)?;
    builder.best_split(0, rows.len(), &node_stats(rows, grads))
}

/// Grows a tree depth-first until `max_depth` or until no split qualifies.
/// Leaf weights are unshrunk.
pub fn build_tree(
    data: &Dataset,
    rows: &RowSet,
    grads: &GradBundle,
    config: &TreeConfig,
) -> Result<TreeBuild> {
    build_tree_in(&mut TreeWorkspace::new(), data, rows, grads, config)
}

/// [`build_tree`] reusing the buffers in `work`.
pub fn build_tree_in(
    work: &mut TreeWorkspace,
    data: &Dataset,
    rows: &RowSet,
    grads: &GradBundle,
    config: &TreeConfig,
) -> Result<TreeBuild> {
    check_rows(data, rows)?;
    config.solver.validate()?;
    let mut builder = Builder::new(data, rows, grads, config, work)?;
    let root = node_stats(rows, grads);
    builder.grow(0, rows.len(), root, 0)?;
    Ok(TreeBuild {
        tree: Tree {
            nodes: builder.nodes,
            depth: builder.depth,
            n_leaves: builder.n_leaves,
        },
        fallback_count: builder.fallbacks,
    })
}
