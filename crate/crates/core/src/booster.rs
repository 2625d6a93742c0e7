//! The additive training loop and the fitted ensemble.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RowSet};
use crate::error::{Error, Result};
use crate::leaf_solver::{CubicMode, FourthOrderFormula, Order, SolverConfig};
use crate::loss::{derivatives, loss_value, sigmoid, LossKind};
use crate::tree::{build_tree_in, Tree, TreeConfig, TreeWorkspace};

/// Log-odds clamp used when every training label is the same.
pub const BASE_SCORE_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub order: Order,
    pub lambda: f64,
    pub max_depth: usize,
    pub min_child_rows: usize,
    pub min_gain: f64,
    pub loss: LossKind,
    pub early_stop_rounds: Option<usize>,
    pub seed: u64,
    pub cubic_mode: CubicMode,
    pub fourth_order_formula: FourthOrderFormula,
    pub trust_alpha: f64,
    /// Overrides the loss-minimising constant start.
    pub base_score: Option<f64>,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            n_rounds: 1000,
            learning_rate: 0.1,
            order: Order::Second,
            lambda: 1.0,
            max_depth: 6,
            min_child_rows: 1,
            min_gain: 0.0,
            loss: LossKind::LogLoss,
            early_stop_rounds: None,
            seed: 0,
            cubic_mode: CubicMode::Halley,
            fourth_order_formula: FourthOrderFormula::Classical,
            trust_alpha: 1.0,
            base_score: None,
        }
    }
}

impl BoostConfig {
    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            order: self.order,
            lambda: self.lambda,
            cubic_mode: self.cubic_mode,
            trust_alpha: self.trust_alpha,
            fourth_order_formula: self.fourth_order_formula,
        }
    }

    pub fn tree(&self) -> TreeConfig {
        TreeConfig {
            solver: self.solver(),
            max_depth: self.max_depth,
            min_child_rows: self.min_child_rows,
            min_gain: self.min_gain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if self.min_child_rows == 0 {
            return Err(Error::InvalidConfig(
                "min_child_rows must be at least 1".into(),
            ));
        }
        if !self.min_gain.is_finite() {
            return Err(Error::InvalidConfig("min_gain must be finite".into()));
        }
        if self.base_score.is_some_and(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("base_score must be finite".into()));
        }
        self.solver().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub config: BoostConfig,
    pub feature_count: usize,
}

impl Model {
    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    fn check_features(&self, found: usize) -> Result<()> {
        if found != self.feature_count {
            return Err(Error::FeatureCountMismatch {
                expected: self.feature_count,
                found,
            });
        }
        Ok(())
    }

    /// Raw score of row `row` in a column-major matrix; trees are added in order.
    #[inline]
    pub fn predict_column_row(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let eta = self.config.learning_rate;
        let mut score = self.base_score;
        for tree in &self.trees {
            score += eta * tree.predict_column_row(columns, row);
        }
        score
    }

    /// Raw scores for a column-major feature matrix.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_features(columns.len())?;
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::LengthMismatch("ragged feature columns".into()));
        }
        Ok((0..n_rows)
            .map(|r| self.predict_column_row(columns, r))
            .collect())
    }

    pub fn predict_row(&self, features: &[f64]) -> Result<f64> {
        self.check_features(features.len())?;
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature {i}")));
        }
        let eta = self.config.learning_rate;
        let mut score = self.base_score;
        for tree in &self.trees {
            score += eta * tree.route(|f| features[f]);
        }
        Ok(score)
    }

    /// Raw scores `base_score + eta * sum f_k(x)`.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_columns(data.columns())
    }

    /// Sigmoid of the raw scores.
    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict(data)?.into_iter().map(sigmoid).collect())
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<Evaluation> {
        if data.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        let scores = self.predict(data)?;
        Ok(evaluate_scores(self.config.loss, data.labels(), &scores))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Mean per-row loss.
    pub loss: f64,
    pub accuracy: f64,
}

/// Fraction of rows where `score > 0` agrees with `label == 1`.
pub fn accuracy(labels: &[f64], scores: &[f64]) -> f64 {
    if labels.is_empty() {
        return f64::NAN;
    }
    let hits = labels
        .iter()
        .zip(scores)
        .filter(|(&y, &s)| (s > 0.0) == (y == 1.0))
        .count();
    hits as f64 / labels.len() as f64
}

pub fn evaluate_scores(loss: LossKind, labels: &[f64], scores: &[f64]) -> Evaluation {
    Evaluation {
        loss: loss_value(loss, labels, scores) / labels.len() as f64,
        accuracy: accuracy(labels, scores),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    /// Mean training loss after this round's tree.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
    /// Training time so far, excluding validation scoring.
    pub cumulative_time_ms: f64,
    pub fallback_count: usize,
}

/// Loss-minimising constant prediction.
pub fn initial_score(loss: LossKind, labels: &[f64]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    match loss {
        LossKind::SquaredError => mean,
        LossKind::LogLoss => {
            if mean <= 0.0 {
                -BASE_SCORE_CLAMP
            } else if mean >= 1.0 {
                BASE_SCORE_CLAMP
            } else {
                (mean / (1.0 - mean))
                    .ln()
                    .clamp(-BASE_SCORE_CLAMP, BASE_SCORE_CLAMP)
            }
        }
    }
}

/// Round-by-round trainer. [`fit`] drives it to completion; the benchmark
/// harness steps it and inspects each new tree.
pub struct Trainer<'a> {
    train: &'a Dataset,
    valid: Option<&'a Dataset>,
    config: BoostConfig,
    tree_config: TreeConfig,
    all_rows: RowSet,
    work: TreeWorkspace,
    model: Model,
    train_scores: Vec<f64>,
    valid_scores: Vec<f64>,
    elapsed_ms: f64,
    best_valid_loss: f64,
    rounds_since_best: usize,
    stopped: bool,
}

impl<'a> Trainer<'a> {
    pub fn new(
        train: &'a Dataset,
        valid: Option<&'a Dataset>,
        config: BoostConfig,
    ) -> Result<Self> {
        config.validate()?;
        if train.n_rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if config.loss.is_classification() {
            train.check_binary_labels()?;
        }
        if let Some(valid) = valid {
            if valid.n_features() != train.n_features() {
                return Err(Error::FeatureCountMismatch {
                    expected: train.n_features(),
                    found: valid.n_features(),
                });
            }
            if config.loss.is_classification() {
                valid.check_binary_labels()?;
            }
        }
        let base_score = config
            .base_score
            .unwrap_or_else(|| initial_score(config.loss, train.labels()));
        let model = Model {
            base_score,
            trees: Vec::new(),
            config: config.clone(),
            feature_count: train.n_features(),
        };
        Ok(Trainer {
            train,
            valid,
            tree_config: config.tree(),
            all_rows: RowSet::all(train.n_rows()),
            work: TreeWorkspace::new(),
            train_scores: vec![base_score; train.n_rows()],
            valid_scores: vec![base_score; valid.map_or(0, Dataset::n_rows)],
            model,
            config,
            elapsed_ms: 0.0,
            best_valid_loss: f64::INFINITY,
            rounds_since_best: 0,
            stopped: false,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.stopped || self.model.trees.len() >= self.config.n_rounds
    }

    /// Adds one tree. Returns `None` once the round budget is spent or early
    /// stopping has triggered.
    pub fn step(&mut self) -> Result<Option<RoundRecord>> {
        if self.is_finished() {
            return Ok(None);
        }
        let started = Instant::now();
        let grads = derivatives(
            self.config.loss,
            self.train.labels(),
            &self.train_scores,
            self.config.order.as_usize(),
        )?;
        let built = build_tree_in(
            &mut self.work,
            self.train,
            &self.all_rows,
            &grads,
            &self.tree_config,
        )?;
        let eta = self.config.learning_rate;
        let columns = self.train.columns();
        for (row, score) in self.train_scores.iter_mut().enumerate() {
            *score += eta * built.tree.predict_column_row(columns, row);
        }
        self.elapsed_ms += started.elapsed().as_secs_f64() * 1e3;

        let train_loss = loss_value(self.config.loss, self.train.labels(), &self.train_scores)
            / self.train.n_rows() as f64;
        let (valid_loss, valid_accuracy) = match self.valid {
            Some(valid) if valid.n_rows() > 0 => {
                let columns = valid.columns();
                for (row, score) in self.valid_scores.iter_mut().enumerate() {
                    *score += eta * built.tree.predict_column_row(columns, row);
                }
                let eval = evaluate_scores(self.config.loss, valid.labels(), &self.valid_scores);
                (Some(eval.loss), Some(eval.accuracy))
            }
            _ => (None, None),
        };
        self.model.trees.push(built.tree);

        if let (Some(patience), Some(loss)) = (self.config.early_stop_rounds, valid_loss) {
            if loss < self.best_valid_loss {
                self.best_valid_loss = loss;
                self.rounds_since_best = 0;
            } else {
                self.rounds_since_best += 1;
                if self.rounds_since_best >= patience {
                    self.stopped = true;
                }
            }
        }

        Ok(Some(RoundRecord {
            round: self.model.trees.len(),
            train_loss,
            valid_loss,
            valid_accuracy,
            cumulative_time_ms: self.elapsed_ms,
            fallback_count: built.fallback_count,
        }))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn last_tree(&self) -> Option<&Tree> {
        self.model.trees.last()
    }

    /// Raw training scores maintained incrementally.
    pub fn train_scores(&self) -> &[f64] {
        &self.train_scores
    }

    pub fn into_model(self) -> Model {
        self.model
    }
}

pub fn fit(
    train: &Dataset,
    valid: Option<&Dataset>,
    config: &BoostConfig,
) -> Result<(Model, Vec<RoundRecord>)> {
    let mut trainer = Trainer::new(train, valid, config.clone())?;
    let mut records = Vec::new();
    while let Some(record) = trainer.step()? {
        records.push(record);
    }
    Ok((trainer.into_model(), records))
}
