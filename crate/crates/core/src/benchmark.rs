//! Time-to-accuracy comparison between leaf-update orders.
//!
//! 1. Every order-2 configuration in the (lambda, eta) grid is trained for the
//!    full round budget; the reference accuracy is the best test accuracy any
//!    of them reaches.
//! 2. The threshold is `threshold_fraction` (0.99) times that reference.
//! 3. Every other configuration trains until its test accuracy reaches the
//!    threshold or the budget runs out.
//!
//! Times are training time only: derivative evaluation, tree growth and the
//! training-score update. Scoring the validation and test sets is excluded.

use std::io::{self, Write};

use crate::booster::{accuracy, BoostConfig, RoundRecord, Trainer};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::leaf_solver::Order;

#[derive(Debug, Clone)]
pub struct BenchmarkPlan {
    pub orders: Vec<Order>,
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
    pub rounds: usize,
    /// Everything not swept (depth, loss, cubic mode, ...).
    pub base: BoostConfig,
    pub threshold_fraction: f64,
    /// Keep training higher orders past the threshold to the full budget.
    pub full_curves: bool,
    /// Stop a higher-order configuration once it has trained as many rounds
    /// as the fastest configuration of its order so far. The per-order best
    /// is unchanged; losers are reported as pruned.
    pub prune: bool,
}

impl Default for BenchmarkPlan {
    fn default() -> Self {
        BenchmarkPlan {
            orders: vec![Order::Second, Order::Third, Order::Fourth],
            lambdas: default_lambda_grid(),
            etas: vec![0.1, 0.3, 1.0],
            rounds: 200,
            base: BoostConfig::default(),
            threshold_fraction: 0.99,
            full_curves: false,
            prune: false,
        }
    }
}

/// Decades from 1 to 10^6.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=6).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BenchmarkData<'a> {
    pub train: &'a Dataset,
    pub valid: Option<&'a Dataset>,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub record: RoundRecord,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ConfigResult {
    pub order: Order,
    pub lambda: f64,
    pub eta: f64,
    pub best_accuracy: f64,
    pub rounds_to_threshold: Option<usize>,
    pub time_to_threshold_ms: Option<f64>,
    /// Relative to the fastest order-2 configuration.
    pub gap_percent: Option<f64>,
    /// Stopped early by [`BenchmarkPlan::prune`] without reaching the threshold.
    pub pruned: bool,
    pub curve: Vec<CurvePoint>,
}

impl ConfigResult {
    /// Sort key for "best": fewest rounds, then least time; unreached last.
    fn speed_key(&self) -> (usize, f64) {
        (
            self.rounds_to_threshold.unwrap_or(usize::MAX),
            self.time_to_threshold_ms.unwrap_or(f64::INFINITY),
        )
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub reference_accuracy: f64,
    pub threshold_accuracy: f64,
    pub results: Vec<ConfigResult>,
}

fn gap_percent(time: f64, reference: f64) -> f64 {
    100.0 * (time - reference) / reference
}

fn run_config(
    data: &BenchmarkData<'_>,
    config: BoostConfig,
    stop_at: Option<f64>,
) -> Result<Vec<CurvePoint>> {
    let mut trainer = Trainer::new(data.train, data.valid, config.clone())?;
    let test_columns = data.test.columns();
    let mut test_scores = vec![trainer.model().base_score; data.test.n_rows()];
    let mut curve = Vec::new();
    while let Some(record) = trainer.step()? {
        let tree = trainer.last_tree().expect("a tree was just added");
        for (row, score) in test_scores.iter_mut().enumerate() {
            *score += config.learning_rate * tree.predict_column_row(test_columns, row);
        }
        let test_accuracy = accuracy(data.test.labels(), &test_scores);
        curve.push(CurvePoint {
            record,
            test_accuracy,
        });
        if stop_at.is_some_and(|t| test_accuracy >= t) {
            break;
        }
    }
    Ok(curve)
}

fn summarize(
    order: Order,
    lambda: f64,
    eta: f64,
    curve: Vec<CurvePoint>,
    threshold: f64,
) -> ConfigResult {
    let best_accuracy = curve
        .iter()
        .map(|p| p.test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let hit = curve.iter().find(|p| p.test_accuracy >= threshold);
    ConfigResult {
        order,
        lambda,
        eta,
        best_accuracy,
        rounds_to_threshold: hit.map(|p| p.record.round),
        time_to_threshold_ms: hit.map(|p| p.record.cumulative_time_ms),
        gap_percent: None,
        pruned: false,
        curve,
    }
}

pub fn run_benchmark(data: &BenchmarkData<'_>, plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    if plan.lambdas.is_empty() || plan.etas.is_empty() || plan.rounds == 0 {
        return Err(Error::InvalidConfig(
            "benchmark grid and round budget must be non-empty".into(),
        ));
    }
    if !(plan.threshold_fraction > 0.0 && plan.threshold_fraction <= 1.0) {
        return Err(Error::InvalidConfig(
            "threshold fraction must be in (0, 1]".into(),
        ));
    }
    if data.test.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let configure = |order: Order, lambda: f64, eta: f64| BoostConfig {
        order,
        lambda,
        learning_rate: eta,
        n_rounds: plan.rounds,
        ..plan.base.clone()
    };

    let mut reference_curves = Vec::new();
    for &lambda in &plan.lambdas {
        for &eta in &plan.etas {
            let curve = run_config(data, configure(Order::Second, lambda, eta), None)?;
            reference_curves.push((lambda, eta, curve));
        }
    }
    let reference_accuracy = reference_curves
        .iter()
        .flat_map(|(_, _, c)| c.iter().map(|p| p.test_accuracy))
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = plan.threshold_fraction * reference_accuracy;

    let mut results: Vec<ConfigResult> = reference_curves
        .into_iter()
        .map(|(lambda, eta, curve)| summarize(Order::Second, lambda, eta, curve, threshold))
        .collect();
    let stop_at = (!plan.full_curves).then_some(threshold);
    for &order in plan.orders.iter().filter(|&&o| o != Order::Second) {
        let mut fastest: Option<usize> = None;
        for &lambda in &plan.lambdas {
            for &eta in &plan.etas {
                let mut config = configure(order, lambda, eta);
                if let Some(cap) = fastest.filter(|_| plan.prune) {
                    config.n_rounds = config.n_rounds.min(cap);
                }
                let capped = config.n_rounds < plan.rounds;
                let curve = run_config(data, config, stop_at)?;
                let mut result = summarize(order, lambda, eta, curve, threshold);
                result.pruned = capped && result.rounds_to_threshold.is_none();
                if let Some(rounds) = result.rounds_to_threshold {
                    fastest = Some(fastest.map_or(rounds, |f| f.min(rounds)));
                }
                results.push(result);
            }
        }
    }

    let mut report = BenchmarkReport {
        reference_accuracy,
        threshold_accuracy: threshold,
        results,
    };
    if let Some(reference_time) = report
        .best(Order::Second)
        .and_then(|r| r.time_to_threshold_ms)
    {
        for result in &mut report.results {
            result.gap_percent = result
                .time_to_threshold_ms
                .map(|t| gap_percent(t, reference_time));
        }
    }
    Ok(report)
}

/// One row of the per-order summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSummary {
    pub order: Order,
    pub lambda: f64,
    pub eta: f64,
    pub best_accuracy: f64,
    pub rounds_to_threshold: Option<usize>,
    pub time_to_threshold_ms: Option<f64>,
    pub gap_percent: Option<f64>,
}

impl BenchmarkReport {
    /// Fastest configuration of `order`: fewest rounds to threshold, then least time.
    pub fn best(&self, order: Order) -> Option<&ConfigResult> {
        self.results
            .iter()
            .filter(|r| r.order == order)
            .min_by(|a, b| {
                let (ra, ta) = a.speed_key();
                let (rb, tb) = b.speed_key();
                ra.cmp(&rb).then(ta.total_cmp(&tb))
            })
    }

    /// Best configuration per order, gaps relative to the best order-2 one.
    pub fn summary(&self) -> Vec<OrderSummary> {
        let reference = self
            .best(Order::Second)
            .and_then(|r| r.time_to_threshold_ms);
        let mut orders: Vec<Order> = self.results.iter().map(|r| r.order).collect();
        orders.dedup();
        orders
            .into_iter()
            .filter_map(|order| self.best(order))
            .map(|r| OrderSummary {
                order: r.order,
                lambda: r.lambda,
                eta: r.eta,
                best_accuracy: r.best_accuracy,
                rounds_to_threshold: r.rounds_to_threshold,
                time_to_threshold_ms: r.time_to_threshold_ms,
                gap_percent: if r.order == Order::Second {
                    r.time_to_threshold_ms.map(|_| 0.0)
                } else {
                    match (r.time_to_threshold_ms, reference) {
                        (Some(t), Some(reference)) => Some(gap_percent(t, reference)),
                        _ => None,
                    }
                },
            })
            .collect()
    }

    /// Text table in the layout of a time-to-accuracy comparison.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "reference accuracy {:.4}, threshold {:.4} ({} configurations)\n",
            self.reference_accuracy,
            self.threshold_accuracy,
            self.results.len()
        ));
        out.push_str(&format!(
            "{:<8} {:>10} {:>6} {:>10} {:>8} {:>12} {:>8}\n",
            "model", "lambda", "eta", "best_acc", "rounds", "time_ms", "gap_%"
        ));
        for row in self.summary() {
            out.push_str(&format!(
                "{:<8} {:>10} {:>6} {:>10.4} {:>8} {:>12} {:>8}\n",
                format!("GBDT-{}", row.order),
                row.lambda,
                row.eta,
                row.best_accuracy,
                row.rounds_to_threshold
                    .map_or("n/r".to_string(), |r| r.to_string()),
                row.time_to_threshold_ms
                    .map_or("n/r".to_string(), |t| format!("{t:.2}")),
                row.gap_percent
                    .map_or("n/r".to_string(), |g| format!("{g:.0}")),
            ));
        }
        out
    }

    /// One CSV row per configuration. Unreached thresholds are `not_reached`,
    /// or `pruned` when the configuration was cut short.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(
            out,
            "order,lambda,eta,best_accuracy,threshold_accuracy,rounds_to_threshold,time_to_threshold_ms,gap_percent"
        )?;
        for r in &self.results {
            let missing = if r.pruned { "pruned" } else { "not_reached" };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.order,
                r.lambda,
                r.eta,
                r.best_accuracy,
                self.threshold_accuracy,
                r.rounds_to_threshold
                    .map_or(missing.to_string(), |v| v.to_string()),
                r.time_to_threshold_ms
                    .map_or(missing.to_string(), |v| v.to_string()),
                r.gap_percent.map_or(missing.to_string(), |v| v.to_string()),
            )?;
        }
        Ok(())
    }
}

pub const CONVERGENCE_HEADER: &str =
    "round,train_loss,valid_loss,valid_accuracy,cumulative_time_ms,fallback_count";

fn opt(value: Option<f64>) -> String {
    value.map_or(String::new(), |v| v.to_string())
}

fn record_fields(r: &RoundRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.round,
        r.train_loss,
        opt(r.valid_loss),
        opt(r.valid_accuracy),
        r.cumulative_time_ms,
        r.fallback_count
    )
}

/// Per-round log; validation cells are empty when no validation set is used.
pub fn write_convergence_csv(mut out: impl Write, records: &[RoundRecord]) -> io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER}")?;
    for r in records {
        writeln!(out, "{}", record_fields(r))?;
    }
    Ok(())
}

/// Convergence log with a trailing `test_accuracy` column.
pub fn write_curve_csv(mut out: impl Write, curve: &[CurvePoint]) -> io::Result<()> {
    writeln!(out, "{CONVERGENCE_HEADER},test_accuracy")?;
    for p in curve {
        writeln!(out, "{},{}", record_fields(&p.record), p.test_accuracy)?;
    }
    Ok(())
}
