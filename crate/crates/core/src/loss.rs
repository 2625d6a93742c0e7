//! Losses with analytic derivatives up to fourth order, and a central
//! finite-difference estimator used to check them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Binary cross-entropy on raw log-odds scores.
    #[serde(rename = "logloss")]
    LogLoss,
    /// `0.5 * (y - yhat)^2`.
    #[serde(rename = "squared_error")]
    SquaredError,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::LogLoss => "logloss",
            LossKind::SquaredError => "squared_error",
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, LossKind::LogLoss)
    }

    /// Loss of a single row.
    pub fn value(self, label: f64, prediction: f64) -> f64 {
        match self {
            // softplus(yhat) - y * yhat, with the linear part folded in exactly
            // when it cancels.
            LossKind::LogLoss => {
                let tail = (-prediction.abs()).exp().ln_1p();
                if prediction >= 0.0 {
                    tail + (1.0 - label) * prediction
                } else {
                    tail - label * prediction
                }
            }
            LossKind::SquaredError => {
                let r = prediction - label;
                0.5 * r * r
            }
        }
    }

    /// Analytic derivatives `[g1, g2, g3, g4]` with respect to the prediction.
    pub fn row_derivatives(self, label: f64, prediction: f64) -> [f64; MAX_ORDER] {
        match self {
            LossKind::LogLoss => {
                let p = sigmoid(prediction);
                let q = sigmoid(-prediction);
                let s = p * q;
                [p - label, s, s * (q - p), s * (1.0 - 6.0 * s)]
            }
            LossKind::SquaredError => [prediction - label, 1.0, 0.0, 0.0],
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logloss" => Ok(LossKind::LogLoss),
            "squared_error" => Ok(LossKind::SquaredError),
            other => Err(Error::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-row loss derivatives `g1..g_order` at the current predictions.
///
/// Rows are stored contiguously as `[g1, g2, g3, g4]`; orders above the
/// bundle's order are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    order: usize,
    rows: Vec<[f64; MAX_ORDER]>,
}

impl GradBundle {
    /// Builds a bundle from explicit per-row values, zeroing entries above `order`.
    pub fn from_rows(order: usize, mut rows: Vec<[f64; MAX_ORDER]>) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::UnsupportedOrder(order));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row[order..].fill(0.0);
            if row.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("derivative at row {i}")));
            }
        }
        Ok(GradBundle { order, rows })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, row: usize) -> &[f64; MAX_ORDER] {
        &self.rows[row]
    }

    pub fn rows(&self) -> &[[f64; MAX_ORDER]] {
        &self.rows
    }

    /// The `k`-th derivative (1-based) for every row.
    pub fn order_values(&self, k: usize) -> Vec<f64> {
        assert!(
            (1..=MAX_ORDER).contains(&k),
            "derivative order {k} out of range"
        );
        self.rows.iter().map(|r| r[k - 1]).collect()
    }
}

pub fn derivatives(
    kind: LossKind,
    labels: &[f64],
    predictions: &[f64],
    order: usize,
) -> Result<GradBundle> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::UnsupportedOrder(order));
    }
    if labels.len() != predictions.len() {
        return Err(Error::LengthMismatch(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut rows = Vec::with_capacity(labels.len());
    for (i, (&y, &yhat)) in labels.iter().zip(predictions).enumerate() {
        if !yhat.is_finite() {
            return Err(Error::NonFinite(format!("prediction at row {i}")));
        }
        let mut g = kind.row_derivatives(y, yhat);
        g[order..].fill(0.0);
        rows.push(g);
    }
    Ok(GradBundle { order, rows })
}

/// Sum of per-row losses.
pub fn loss_value(kind: LossKind, labels: &[f64], predictions: &[f64]) -> f64 {
    debug_assert_eq!(labels.len(), predictions.len());
    labels
        .iter()
        .zip(predictions)
        .map(|(&y, &yhat)| kind.value(y, yhat))
        .sum()
}

/// Step sizes for [`fd_derivative`], indexed by derivative order.
pub fn default_fd_step(k: usize) -> f64 {
    match k {
        1 => 1e-5,
        2 => 1e-4,
        3 => 1e-3,
        _ => 2e-2,
    }
}

/// Central finite-difference estimate of the `k`-th derivative of the row loss.
///
/// Stencils: 3 points for k = 1, 2 and 5 points for k = 3, all O(h^2); for
/// k = 4 a 7-point O(h^4) stencil, since the 5-point one needs a step small
/// enough that round-off dominates.
///
/// For k >= 2 any linear term of the loss contributes nothing, so the stencil
/// is applied to the loss minus a linear function chosen to keep the sampled
/// values small near the evaluation point. This leaves the estimate unchanged
/// in exact arithmetic and keeps round-off from swamping high-order stencils.
pub fn fd_derivative(kind: LossKind, label: f64, prediction: f64, k: usize, h: f64) -> f64 {
    assert!(
        (1..=MAX_ORDER).contains(&k),
        "derivative order {k} out of range"
    );
    assert!(h > 0.0, "step must be positive");
    let f = |x: f64| -> f64 {
        match kind {
            LossKind::LogLoss if k >= 2 => {
                // softplus(x) and softplus(-x) differ from the loss by linear terms.
                let s = if prediction >= 0.0 { -x } else { x };
                softplus(s)
            }
            LossKind::SquaredError if k >= 2 => {
                let d = x - prediction;
                0.5 * d * d
            }
            _ => kind.value(label, x),
        }
    };
    let at = |j: f64| f(prediction + j * h);
    match k {
        1 => (at(1.0) - at(-1.0)) / (2.0 * h),
        2 => (at(1.0) - 2.0 * at(0.0) + at(-1.0)) / (h * h),
        3 => (at(2.0) - 2.0 * at(1.0) + 2.0 * at(-1.0) - at(-2.0)) / (2.0 * h * h * h),
        _ => {
            let outer = at(3.0) + at(-3.0);
            let middle = at(2.0) + at(-2.0);
            let inner = at(1.0) + at(-1.0);
            (-outer + 12.0 * middle - 39.0 * inner + 56.0 * at(0.0)) / (6.0 * h * h * h * h)
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
