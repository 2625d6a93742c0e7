//! Gradient-boosted decision trees whose leaf weights come from second,
//! third or fourth order Taylor models of the loss.
//!
//! A round computes per-row loss derivatives `g1..gk` at the current
//! predictions ([`loss`]), grows one tree by exact greedy search over the
//! aggregated sums ([`tree`]), sets each leaf by a closed-form Householder
//! update ([`leaf_solver`]) and adds the shrunk tree to the ensemble
//! ([`booster`]).

pub mod benchmark;
pub mod booster;
pub mod data;
pub mod error;
pub mod leaf_solver;
pub mod loss;
pub mod model_store;
pub mod tree;

pub use booster::{evaluate_scores, fit, BoostConfig, Evaluation, Model, RoundRecord, Trainer};
pub use data::{make_synthetic, synthetic_splits, CsvOptions, Dataset, LabelColumn, RowSet, Table};
pub use error::{Error, Result};
pub use leaf_solver::{
    leaf_score, solve_leaf, CubicMode, FourthOrderFormula, GradStats, LeafSolution, Order,
    SolverConfig, SolverDiagnostics,
};
pub use loss::{derivatives, fd_derivative, loss_value, GradBundle, LossKind};
pub use tree::{
    build_tree, build_tree_in, find_best_split, predict_tree, Node, SplitDecision, Tree, TreeBuild,
    TreeConfig, TreeWorkspace,
};
