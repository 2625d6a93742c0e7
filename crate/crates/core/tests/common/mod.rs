//! Independent oracles and the checks built on them. Shared by the core
//! integration tests and the acceptance runner in the CLI crate.

#![allow(dead_code)]

use hiboost::leaf_solver::{weight_cubic_exact, weight_cubic_series, weight_halley, weight_order4};
use hiboost::{
    derivatives, find_best_split, fit, leaf_score, model_store, BoostConfig, Dataset, GradBundle,
    GradStats, LossKind, Model, Order, RowSet, SolverConfig, TreeConfig,
};
use hiboost::{make_synthetic, FourthOrderFormula};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub const ORDERS: [Order; 3] = [Order::Second, Order::Third, Order::Fourth];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- derivatives

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Central differences of the logistic loss `softplus(x) - y x`.
///
/// For k >= 2 the linear part is irrelevant, and on the side where it is
/// large `softplus(x) - x = softplus(-x)` keeps the sampled values tiny, so
/// round-off does not swamp the stencil.
pub fn logloss_fd(label: f64, x0: f64, k: usize) -> f64 {
    let f = |x: f64| -> f64 {
        if k == 1 {
            softplus(x) - label * x
        } else if x0 > 0.0 {
            softplus(-x)
        } else {
            softplus(x)
        }
    };
    match k {
        1 => {
            let h = 1e-5;
            (f(x0 + h) - f(x0 - h)) / (2.0 * h)
        }
        2 => {
            let h = 1e-4;
            (f(x0 + h) - 2.0 * f(x0) + f(x0 - h)) / (h * h)
        }
        3 => {
            let h = 1e-3;
            (f(x0 + 2.0 * h) - 2.0 * f(x0 + h) + 2.0 * f(x0 - h) - f(x0 - 2.0 * h))
                / (2.0 * h * h * h)
        }
        4 => {
            // Seven-point stencil, error O(h^4).
            let h = 2e-2;
            let s = |i: f64| f(x0 + i * h) + f(x0 - i * h);
            (-s(3.0) + 12.0 * s(2.0) - 39.0 * s(1.0) + 56.0 * f(x0)) / (6.0 * h.powi(4))
        }
        _ => unreachable!("orders 1 to 4 only"),
    }
}

/// Analytic logloss derivatives on y in {0, 1}, prediction in [-10, 10] step
/// 0.5, against central differences.
pub fn check_derivatives() -> Check {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for label in [0.0, 1.0] {
        for step in -20..=20 {
            let x = f64::from(step) * 0.5;
            let bundle =
                derivatives(LossKind::LogLoss, &[label], &[x], 4).map_err(|e| e.to_string())?;
            for k in 1..=4 {
                let analytic = bundle.row(0)[k - 1];
                let numeric = logloss_fd(label, x, k);
                let tol = f64::max(1e-5, 1e-4 * analytic.abs());
                let err = (analytic - numeric).abs();
                ensure(err <= tol, || {
                    format!("y={label} x={x} k={k}: analytic {analytic:e} vs fd {numeric:e}")
                })?;
                worst = worst.max(err / tol);
                points += 1;
            }
        }
    }
    Ok(format!(
        "{points} points, worst error {worst:.3} of tolerance"
    ))
}

// ---------------------------------------------------------------- closed forms

/// Leaf weights for G1=1, G2=2, G3=1, G4=0, lambda=0.
pub fn check_closed_forms() -> Check {
    let stats = GradStats::new(1.0, 2.0, 1.0, 0.0);
    let (g1, h, g3) = (1.0_f64, 2.0_f64, 1.0_f64);

    // Stationary point of G1 w + H w^2 / 2 + G3 w^3 / 6: G1 + H w + G3 w^2 / 2 = 0.
    let root = (-h + (h * h - 2.0 * g1 * g3).sqrt()) / g3;
    let residual = |w: f64| g1 + h * w + 0.5 * g3 * w * w;
    let (exact, _) = weight_cubic_exact(&stats, 0.0).map_err(|e| e.to_string())?;
    ensure((exact - -0.585786).abs() < 1e-6, || {
        format!("cubic root {exact}")
    })?;
    ensure((exact - root).abs() < 1e-12, || {
        format!("cubic root {exact} vs {root}")
    })?;
    ensure(residual(exact).abs() < 1e-10, || {
        format!("cubic root residual {:e}", residual(exact))
    })?;

    let (halley, _) = weight_halley(&stats, 0.0, 1.0).map_err(|e| e.to_string())?;
    ensure((halley - -0.571429).abs() < 1e-6, || {
        format!("halley {halley}")
    })?;
    ensure((halley - -4.0 / 7.0).abs() < 1e-15, || {
        format!("halley {halley}")
    })?;

    let (fourth, _) = weight_order4(&stats, 0.0, FourthOrderFormula::Classical, 1.0)
        .map_err(|e| e.to_string())?;
    ensure((fourth - -0.583333).abs() < 1e-6, || {
        format!("order 4 {fourth}")
    })?;
    ensure((fourth - -7.0 / 12.0).abs() < 1e-15, || {
        format!("order 4 {fourth}")
    })?;

    Ok(format!(
        "cubic {exact:.6} (residual {:.1e}), halley {halley:.6}, order 4 {fourth:.6}",
        residual(exact).abs()
    ))
}

// ---------------------------------------------------------------- series

/// Halley against the first-order series on random stats with |alpha| <= 0.1.
pub fn check_series_consistency(samples: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let lambda = if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.0..10.0)
        };
        let g2 = rng.random_range(0.01..100.0);
        let h = g2 + lambda;
        let g1 = rng.random_range(-50.0..50.0);
        if g1 == 0.0 {
            continue;
        }
        let alpha = rng.random_range(-0.1..=0.1);
        let g3 = alpha * h * h / g1;
        let stats = GradStats::new(g1, g2, g3, rng.random_range(-10.0..10.0));
        let a = g1 * g3 / (h * h);
        let newton = -g1 / h;
        let (halley, _) = weight_halley(&stats, lambda, 1.0).map_err(|e| e.to_string())?;
        let (series, _) = weight_cubic_series(&stats, lambda, 1.0).map_err(|e| e.to_string())?;
        let bound = 2.0 * a * a * newton.abs();
        let diff = (halley - series).abs();
        ensure(diff <= bound, || {
            format!("g1={g1} g2={g2} g3={g3} lambda={lambda}: |diff| {diff:e} > {bound:e}")
        })?;
        if bound > 0.0 {
            worst = worst.max(diff / bound);
        }
    }
    Ok(format!(
        "{samples} samples, worst ratio to bound {worst:.3}"
    ))
}

// ---------------------------------------------------------------- splits

pub struct Candidate {
    pub feature: usize,
    /// Largest value going left.
    pub lo: f64,
    /// Smallest value going right.
    pub hi: f64,
    pub gain: f64,
}

/// Every admissible split of `rows`, scored by summing each side from scratch.
pub fn brute_force_candidates(
    data: &Dataset,
    rows: &[u32],
    grads: &GradBundle,
    config: &TreeConfig,
) -> Vec<Candidate> {
    let sum = |pick: &dyn Fn(u32) -> bool| {
        let mut stats = GradStats::default();
        for &r in rows.iter().filter(|&&r| pick(r)) {
            stats.push(grads.row(r as usize));
        }
        stats
    };
    let parent = leaf_score(&sum(&|_| true), &config.solver).expect("valid parent");
    let mut out = Vec::new();
    for feature in 0..data.n_features() {
        let column = data.column(feature);
        let mut values: Vec<f64> = rows.iter().map(|&r| column[r as usize]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let left = sum(&|r| column[r as usize] <= lo);
            let right = sum(&|r| column[r as usize] >= hi);
            if left.count < config.min_child_rows || right.count < config.min_child_rows {
                continue;
            }
            let score = |s: &GradStats| leaf_score(s, &config.solver).expect("valid child");
            out.push(Candidate {
                feature,
                lo,
                hi,
                gain: score(&left) + score(&right) - parent,
            });
        }
    }
    out
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// A random problem for the split search: columns with and without repeated
/// values, logloss derivatives at random margins, maybe a row subset.
pub fn random_split_problem(
    rng: &mut ChaCha8Rng,
    order: Order,
) -> (Dataset, Vec<u32>, GradBundle, TreeConfig) {
    let n = rng.random_range(2..=64);
    let m = rng.random_range(1..=4);
    let mut columns: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let levels = rng.random_range(0..4);
            (0..n)
                .map(|_| match levels {
                    0 => rng.random_range(-1.0..1.0),
                    l => f64::from(rng.random_range(0..=2 * l)),
                })
                .collect()
        })
        .collect();
    if m > 1 && rng.random_bool(0.25) {
        // Identical features tie exactly on every threshold.
        columns[m - 1] = columns[0].clone();
    }
    let labels: Vec<f64> = (0..n)
        .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
        .collect();
    let margins: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
    let grads = derivatives(LossKind::LogLoss, &labels, &margins, order.as_usize()).unwrap();
    let data = Dataset::new(columns, labels).unwrap();
    let rows: Vec<u32> = if rng.random_bool(0.3) {
        (0..n as u32).filter(|_| rng.random_bool(0.7)).collect()
    } else {
        (0..n as u32).collect()
    };
    let lambda = [0.0, 0.5, 2.0][rng.random_range(0..3)];
    let config = TreeConfig {
        solver: SolverConfig::with_order(order, lambda),
        max_depth: 6,
        min_child_rows: rng.random_range(1..=3),
        min_gain: 0.0,
    };
    (data, rows, grads, config)
}

/// `find_best_split` against the quadratic-per-feature brute force.
pub fn check_split_oracle(datasets: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits = 0;
    for order in ORDERS {
        for case in 0..datasets {
            let (data, rows, grads, config) = random_split_problem(&mut rng, order);
            if rows.is_empty() {
                continue;
            }
            let row_set = RowSet::new(rows.clone(), data.n_rows()).unwrap();
            let found =
                find_best_split(&data, &row_set, &grads, &config).map_err(|e| e.to_string())?;
            let candidates = brute_force_candidates(&data, &rows, &grads, &config);
            let best_gain = candidates
                .iter()
                .map(|c| c.gain)
                .fold(f64::NEG_INFINITY, f64::max);
            let label = format!("order {order} case {case}");
            let Some(split) = found else {
                ensure(best_gain <= config.min_gain, || {
                    format!("{label}: no split found, oracle gain {best_gain}")
                })?;
                continue;
            };
            splits += 1;
            ensure(best_gain > config.min_gain, || {
                format!("{label}: split found, oracle best gain {best_gain}")
            })?;
            ensure(close(split.gain, best_gain, 1e-9), || {
                format!("{label}: gain {} vs oracle {best_gain}", split.gain)
            })?;
            // Ties go to the lowest (feature, threshold). Gains that agree
            // to 1e-12 count as tied: sums taken in a different order differ
            // by far less, and distinct candidates by far more.
            let expected = candidates
                .iter()
                .find(|c| close(c.gain, best_gain, 1e-12))
                .expect("the best candidate is tied with itself");
            ensure(
                split.feature == expected.feature
                    && expected.lo < split.threshold
                    && split.threshold <= expected.hi,
                || {
                    format!(
                        "{label}: chose feature {} threshold {}, oracle feature {} in ({}, {}]",
                        split.feature, split.threshold, expected.feature, expected.lo, expected.hi
                    )
                },
            )?;
            // Children partition the node exactly.
            let column = data.column(split.feature);
            let left_rows = rows
                .iter()
                .filter(|&&r| column[r as usize] < split.threshold)
                .count();
            ensure(
                split.left_stats.count == left_rows
                    && split.left_stats.count + split.right_stats.count == rows.len(),
                || format!("{label}: child counts"),
            )?;
        }
    }
    Ok(format!(
        "{} datasets per order, {splits} splits matched",
        datasets
    ))
}

// ---------------------------------------------------------------- training

pub fn squared_error_config(order: Order, rounds: usize, depth: usize) -> BoostConfig {
    BoostConfig {
        order,
        n_rounds: rounds,
        max_depth: depth,
        loss: LossKind::SquaredError,
        ..BoostConfig::default()
    }
}

/// Squared error has no third or fourth derivative, so every order must
/// grow the same trees.
pub fn check_order_collapse(seed: u64) -> Check {
    let data = make_synthetic(2000, 8, seed).map_err(|e| e.to_string())?;
    let mut documents = Vec::new();
    for order in ORDERS {
        let config = BoostConfig {
            seed,
            ..squared_error_config(order, 100, 3)
        };
        let (mut model, _) = fit(&data, None, &config).map_err(|e| e.to_string())?;
        model.config.order = Order::Second;
        documents.push(model_store::to_string(&model));
    }
    ensure(documents[0] == documents[1], || {
        "order 3 model differs from order 2".into()
    })?;
    ensure(documents[0] == documents[2], || {
        "order 4 model differs from order 2".into()
    })?;
    Ok(format!(
        "3 models of 100 trees, {} bytes each, identical apart from the order field",
        documents[0].len()
    ))
}

/// Depth 0, eta 1, lambda 0 on squared error lands on the label mean in one
/// round, after which the next leaf is 0.
pub fn check_newton_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 257;
    let labels: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..40.0)).collect();
    let column: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let data = Dataset::new(vec![column], labels.clone()).map_err(|e| e.to_string())?;
    let config = BoostConfig {
        order: Order::Second,
        n_rounds: 2,
        learning_rate: 1.0,
        lambda: 0.0,
        max_depth: 0,
        loss: LossKind::SquaredError,
        base_score: Some(0.0),
        ..BoostConfig::default()
    };
    let (model, _) = fit(&data, None, &config).map_err(|e| e.to_string())?;
    let mean = labels.iter().sum::<f64>() / n as f64;
    let after_one = model.base_score + model.trees[0].leaf_weights().next().unwrap();
    let second = model.trees[1].leaf_weights().next().unwrap();
    ensure(
        (after_one - mean).abs() <= 1e-12 * mean.abs().max(1.0),
        || format!("round 1 prediction {after_one} vs mean {mean}"),
    )?;
    ensure(second.abs() <= 1e-12, || {
        format!("round 2 weight {second:e}")
    })?;
    Ok(format!("mean {mean:.6}, round-2 weight {second:e}"))
}

/// Order 2 logloss training loss never goes up.
pub fn check_monotone_loss() -> Check {
    let data = make_synthetic(5000, 10, 11).map_err(|e| e.to_string())?;
    let config = BoostConfig {
        order: Order::Second,
        n_rounds: 200,
        learning_rate: 0.3,
        min_gain: 0.0,
        loss: LossKind::LogLoss,
        ..BoostConfig::default()
    };
    let (_, records) = fit(&data, None, &config).map_err(|e| e.to_string())?;
    ensure(records.len() == 200, || format!("{} rounds", records.len()))?;
    for pair in records.windows(2) {
        ensure(pair[1].train_loss <= pair[0].train_loss, || {
            format!(
                "round {}: {} > {}",
                pair[1].round, pair[1].train_loss, pair[0].train_loss
            )
        })?;
    }
    Ok(format!(
        "train loss {:.5} -> {:.5} over 200 rounds",
        records[0].train_loss, records[199].train_loss
    ))
}

/// A model trained on random data with random hyperparameters.
pub fn random_model(rng: &mut ChaCha8Rng) -> Model {
    let n_features = rng.random_range(1..=6);
    let data = make_synthetic(rng.random_range(20..300), n_features, rng.random()).unwrap();
    let config = BoostConfig {
        order: ORDERS[rng.random_range(0..3)],
        n_rounds: rng.random_range(0..12),
        learning_rate: rng.random_range(0.05..1.0),
        lambda: rng.random_range(0.0..5.0),
        max_depth: rng.random_range(0..5),
        loss: if rng.random_bool(0.5) {
            LossKind::LogLoss
        } else {
            LossKind::SquaredError
        },
        ..BoostConfig::default()
    };
    fit(&data, None, &config).unwrap().0
}

/// Save/load keeps predictions bit for bit.
pub fn check_persistence(models: usize, inputs: usize, seed: u64) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..models {
        let model = random_model(&mut rng);
        let path = dir.path().join(format!("model{i}.json"));
        model_store::save(&model, &path).map_err(|e| e.to_string())?;
        let loaded = model_store::load(&path).map_err(|e| e.to_string())?;
        for _ in 0..inputs {
            let x: Vec<f64> = (0..model.feature_count)
                .map(|_| match rng.random_range(0..10) {
                    0 => rng.random_range(-1e6..1e6),
                    _ => rng.random_range(-1.5..1.5),
                })
                .collect();
            let a = model.predict_row(&x).map_err(|e| e.to_string())?;
            let b = loaded.predict_row(&x).map_err(|e| e.to_string())?;
            ensure(a.to_bits() == b.to_bits(), || {
                format!("model {i}: {a} vs {b} on {x:?}")
            })?;
        }
    }
    Ok(format!(
        "{models} models x {inputs} inputs bitwise identical"
    ))
}
