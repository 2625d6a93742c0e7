//! Closed-form leaf weights from aggregated derivative sums.
//!
//! All updates are members of the Householder family applied to the leaf
//! objective's first derivative at `w = 0`:
//!
//! * order 2: Newton, `w = -G1 / H`
//! * order 3: Halley, `w = -(G1 / H) / (1 - a/2)`, plus the exact root of the
//!   quadratic `G1 + H w + G3 w^2 / 2` and its first-order series
//! * order 4: `w = -G1 (H^2 - G1 G3 / 2) / (H^3 - G1 H G3 + G1^2 G4 / 6)`
//!
//! where `H = G2 + lambda` and `a = G1 G3 / H^2` is dimensionless. Whenever a
//! higher-order formula is singular or `|a|` leaves the trust region, the
//! Newton weight is returned and the fallback is reported.

use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::MAX_ORDER;

/// Sums of per-row derivatives over a set of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradStats {
    pub g: [f64; MAX_ORDER],
    pub count: usize,
}

impl GradStats {
    pub fn new(g1: f64, g2: f64, g3: f64, g4: f64) -> Self {
        GradStats {
            g: [g1, g2, g3, g4],
            count: 0,
        }
    }

    pub fn g1(&self) -> f64 {
        self.g[0]
    }
    pub fn g2(&self) -> f64 {
        self.g[1]
    }
    pub fn g3(&self) -> f64 {
        self.g[2]
    }
    pub fn g4(&self) -> f64 {
        self.g[3]
    }

    /// Adds one row's derivatives, left to right.
    #[inline]
    pub fn push(&mut self, row: &[f64; MAX_ORDER]) {
        for (acc, v) in self.g.iter_mut().zip(row) {
            *acc += v;
        }
        self.count += 1;
    }

    pub fn sum_rows<'a>(rows: impl IntoIterator<Item = &'a [f64; MAX_ORDER]>) -> Self {
        let mut stats = GradStats::default();
        for row in rows {
            stats.push(row);
        }
        stats
    }
}

impl Add for GradStats {
    type Output = GradStats;
    fn add(mut self, rhs: GradStats) -> GradStats {
        self += rhs;
        self
    }
}

impl AddAssign for GradStats {
    fn add_assign(&mut self, rhs: GradStats) {
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a += b;
        }
        self.count += rhs.count;
    }
}

impl Sub for GradStats {
    type Output = GradStats;
    fn sub(mut self, rhs: GradStats) -> GradStats {
        for (a, b) in self.g.iter_mut().zip(rhs.g) {
            *a -= b;
        }
        self.count -= rhs.count;
        self
    }
}

/// Taylor order of the leaf objective; serialized as the integer 2, 3 or 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "usize", try_from = "usize")]
pub enum Order {
    Second,
    Third,
    Fourth,
}

impl From<Order> for usize {
    fn from(order: Order) -> usize {
        order.as_usize()
    }
}

impl TryFrom<usize> for Order {
    type Error = Error;
    fn try_from(order: usize) -> Result<Self> {
        Order::from_usize(order)
    }
}

impl Order {
    pub fn as_usize(self) -> usize {
        match self {
            Order::Second => 2,
            Order::Third => 3,
            Order::Fourth => 4,
        }
    }

    pub fn from_usize(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Order::Second),
            3 => Ok(Order::Third),
            4 => Ok(Order::Fourth),
            other => Err(Error::InvalidConfig(format!(
                "order must be 2, 3 or 4, got {other}"
            ))),
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.as_usize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicMode {
    Halley,
    ExactRoot,
    Series,
}

impl std::str::FromStr for CubicMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halley" => Ok(CubicMode::Halley),
            "exact" | "exact_root" => Ok(CubicMode::ExactRoot),
            "series" => Ok(CubicMode::Series),
            other => Err(Error::InvalidConfig(format!(
                "unknown cubic mode {other:?}"
            ))),
        }
    }
}

/// Which denominator the fourth-order update uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FourthOrderFormula {
    /// Householder p = 2: last denominator term `G1^2 G4 / 6`.
    Classical,
    /// Last denominator term `G1 G4 / 6`.
    PaperLiteral,
}

impl std::str::FromStr for FourthOrderFormula {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(FourthOrderFormula::Classical),
            "paper" | "paper_literal" => Ok(FourthOrderFormula::PaperLiteral),
            other => Err(Error::InvalidConfig(format!(
                "unknown fourth-order formula {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub order: Order,
    pub lambda: f64,
    pub cubic_mode: CubicMode,
    pub trust_alpha: f64,
    pub fourth_order_formula: FourthOrderFormula,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            order: Order::Second,
            lambda: 1.0,
            cubic_mode: CubicMode::Halley,
            trust_alpha: 1.0,
            fourth_order_formula: FourthOrderFormula::Classical,
        }
    }
}

impl SolverConfig {
    pub fn with_order(order: Order, lambda: f64) -> Self {
        SolverConfig {
            order,
            lambda,
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.trust_alpha.is_nan() || self.trust_alpha <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "trust_alpha must be > 0, got {}",
                self.trust_alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverDiagnostics {
    /// `G1 G3 / (G2 + lambda)^2`.
    pub alpha: f64,
    pub fallback_used: bool,
    pub newton_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeafSolution {
    pub weight: f64,
    pub score: f64,
    pub diagnostics: SolverDiagnostics,
}

const SINGULAR_HALLEY: f64 = 1e-9;
const SINGULAR_FOURTH: f64 = 1e-12;
// Multiplying by reciprocals keeps divisions out of the split scan.
const SIXTH: f64 = 1.0 / 6.0;
const TWENTY_FOURTH: f64 = 1.0 / 24.0;

fn curvature(stats: &GradStats, lambda: f64) -> Result<f64> {
    let h = stats.g2() + lambda;
    if h > 0.0 && h.is_finite() {
        Ok(h)
    } else {
        Err(Error::DegenerateDenominator(h))
    }
}

#[inline(always)]
fn alpha(stats: &GradStats, h: f64) -> f64 {
    let inv = 1.0 / h;
    stats.g1() * stats.g3() * (inv * inv)
}

#[inline(always)]
fn inv_cube(h: f64) -> f64 {
    let inv = 1.0 / h;
    inv * inv * inv
}

fn newton_parts(stats: &GradStats, lambda: f64) -> Result<(f64, f64, f64)> {
    let h = curvature(stats, lambda)?;
    let newton = -stats.g1() / h;
    Ok((h, newton, alpha(stats, h)))
}

fn fallback(newton: f64, alpha: f64) -> (f64, SolverDiagnostics) {
    (
        newton,
        SolverDiagnostics {
            alpha,
            fallback_used: true,
            newton_weight: newton,
        },
    )
}

fn accepted(weight: f64, newton: f64, alpha: f64) -> (f64, SolverDiagnostics) {
    (
        weight,
        SolverDiagnostics {
            alpha,
            fallback_used: false,
            newton_weight: newton,
        },
    )
}

/// Friedman's gradient step with unit curvature, `-G1 / (count + lambda)`.
/// Not selectable as a training order; kept as a first-order reference.
pub fn weight_order1(stats: &GradStats, lambda: f64) -> Result<f64> {
    let denominator = stats.count as f64 + lambda;
    if denominator > 0.0 {
        Ok(-stats.g1() / denominator)
    } else {
        Err(Error::DegenerateDenominator(denominator))
    }
}

pub fn weight_order2(stats: &GradStats, lambda: f64) -> Result<f64> {
    Ok(-stats.g1() / curvature(stats, lambda)?)
}

/// Higher-order weight from the Newton step and `alpha`, and whether the
/// configured formula applies (`false` means fall back to Newton).
///
/// Every branch is computed and then selected, so split scans vectorize.
#[inline(always)]
fn higher_order_weight(
    stats: &GradStats,
    config: &SolverConfig,
    h: f64,
    newton: f64,
    alpha: f64,
) -> (f64, bool) {
    match config.order {
        Order::Second => (newton, true),
        Order::Third => match config.cubic_mode {
            CubicMode::Halley => halley_core(newton, alpha, config.trust_alpha),
            CubicMode::ExactRoot => cubic_exact_core(stats, h, newton, alpha),
            CubicMode::Series => cubic_series_core(newton, alpha, config.trust_alpha),
        },
        Order::Fourth => order4_core(
            stats,
            h,
            newton,
            alpha,
            config.fourth_order_formula,
            config.trust_alpha,
        ),
    }
}

#[inline(always)]
fn cubic_exact_core(stats: &GradStats, h: f64, newton: f64, alpha: f64) -> (f64, bool) {
    let discriminant = 1.0 - 2.0 * alpha;
    // -(H/G3)(1 - sqrt(D)) rewritten without the cancellation in 1 - sqrt(D).
    let root = -2.0 * stats.g1() / (h * (1.0 + discriminant.sqrt()));
    let linear = stats.g3() == 0.0;
    let weight = if linear { newton } else { root };
    (weight, linear || discriminant >= 0.0)
}

#[inline(always)]
fn cubic_series_core(newton: f64, alpha: f64, trust_alpha: f64) -> (f64, bool) {
    (newton * (1.0 + 0.5 * alpha), alpha.abs() <= trust_alpha)
}

#[inline(always)]
fn halley_core(newton: f64, alpha: f64, trust_alpha: f64) -> (f64, bool) {
    let denominator = 1.0 - 0.5 * alpha;
    let ok = alpha.abs() <= trust_alpha && denominator.abs() >= SINGULAR_HALLEY;
    (newton / denominator, ok)
}

#[inline(always)]
fn order4_core(
    stats: &GradStats,
    h: f64,
    newton: f64,
    alpha: f64,
    formula: FourthOrderFormula,
    trust_alpha: f64,
) -> (f64, bool) {
    // Numerator and denominator divided through by H^3.
    let quartic = match formula {
        FourthOrderFormula::Classical => stats.g1() * stats.g1() * stats.g4() * inv_cube(h),
        FourthOrderFormula::PaperLiteral => stats.g1() * stats.g4() * inv_cube(h),
    };
    let denominator = 1.0 - alpha + quartic * SIXTH;
    let ok = alpha.abs() <= trust_alpha && denominator.abs() >= SINGULAR_FOURTH;
    (newton * (1.0 - 0.5 * alpha) / denominator, ok)
}

fn diagnose((weight, ok): (f64, bool), newton: f64, alpha: f64) -> (f64, SolverDiagnostics) {
    if ok {
        accepted(weight, newton, alpha)
    } else {
        fallback(newton, alpha)
    }
}

/// Stationary point of the cubic leaf objective on the branch that tends to
/// the Newton step as `G3 -> 0`. Falls back to Newton when no real root exists.
pub fn weight_cubic_exact(stats: &GradStats, lambda: f64) -> Result<(f64, SolverDiagnostics)> {
    let (h, newton, alpha) = newton_parts(stats, lambda)?;
    Ok(diagnose(
        cubic_exact_core(stats, h, newton, alpha),
        newton,
        alpha,
    ))
}

pub fn weight_cubic_series(
    stats: &GradStats,
    lambda: f64,
    trust_alpha: f64,
) -> Result<(f64, SolverDiagnostics)> {
    let (_, newton, alpha) = newton_parts(stats, lambda)?;
    Ok(diagnose(
        cubic_series_core(newton, alpha, trust_alpha),
        newton,
        alpha,
    ))
}

pub fn weight_halley(
    stats: &GradStats,
    lambda: f64,
    trust_alpha: f64,
) -> Result<(f64, SolverDiagnostics)> {
    let (_, newton, alpha) = newton_parts(stats, lambda)?;
    Ok(diagnose(
        halley_core(newton, alpha, trust_alpha),
        newton,
        alpha,
    ))
}

pub fn weight_order4(
    stats: &GradStats,
    lambda: f64,
    formula: FourthOrderFormula,
    trust_alpha: f64,
) -> Result<(f64, SolverDiagnostics)> {
    let (h, newton, alpha) = newton_parts(stats, lambda)?;
    Ok(diagnose(
        order4_core(stats, h, newton, alpha, formula, trust_alpha),
        newton,
        alpha,
    ))
}

/// Weight from the configured order and mode, before the score safeguard.
pub fn configured_weight(
    stats: &GradStats,
    config: &SolverConfig,
) -> Result<(f64, SolverDiagnostics)> {
    let (h, newton, alpha) = newton_parts(stats, config.lambda)?;
    Ok(diagnose(
        higher_order_weight(stats, config, h, newton, alpha),
        newton,
        alpha,
    ))
}

/// Negated leaf objective, Taylor-truncated at `order`:
/// `-(G1 w + (G2 + lambda) w^2 / 2 + G3 w^3 / 6 + G4 w^4 / 24)`.
#[inline]
pub fn objective_score(stats: &GradStats, lambda: f64, order: Order, w: f64) -> f64 {
    let h = stats.g2() + lambda;
    let inner = match order {
        Order::Second => 0.5 * h,
        Order::Third => 0.5 * h + w * (stats.g3() * SIXTH),
        Order::Fourth => 0.5 * h + w * (stats.g3() * SIXTH + w * (stats.g4() * TWENTY_FOURTH)),
    };
    -w * (stats.g1() + w * inner)
}

/// Solves for the leaf weight and its score.
///
/// The score never falls below the Newton weight's score under the same
/// truncated objective; when it would, the Newton weight is used instead.
pub fn solve_leaf(stats: &GradStats, config: &SolverConfig) -> Result<LeafSolution> {
    let (weight, mut diagnostics) = configured_weight(stats, config)?;
    let score = objective_score(stats, config.lambda, config.order, weight);
    if config.order == Order::Second || diagnostics.fallback_used {
        return Ok(LeafSolution {
            weight,
            score,
            diagnostics,
        });
    }
    let newton = diagnostics.newton_weight;
    let newton_score = objective_score(stats, config.lambda, config.order, newton);
    if score < newton_score {
        diagnostics.fallback_used = true;
        return Ok(LeafSolution {
            weight: newton,
            score: newton_score,
            diagnostics,
        });
    }
    Ok(LeafSolution {
        weight,
        score,
        diagnostics,
    })
}

pub fn leaf_score(stats: &GradStats, config: &SolverConfig) -> Result<f64> {
    solve_leaf(stats, config).map(|s| s.score)
}

/// `solve_leaf(stats, config).score` without diagnostics, for scanning split
/// candidates; NaN where `solve_leaf` returns an error.
#[inline(always)]
pub(crate) fn split_score(stats: &GradStats, config: &SolverConfig) -> f64 {
    let h = stats.g2() + config.lambda;
    let valid = h > 0.0 && h < f64::INFINITY;
    let newton = -stats.g1() / h;
    let newton_score = objective_score(stats, config.lambda, config.order, newton);
    let score = if config.order == Order::Second {
        newton_score
    } else {
        let alpha = alpha(stats, h);
        let (weight, ok) = higher_order_weight(stats, config, h, newton, alpha);
        let score = objective_score(stats, config.lambda, config.order, weight);
        // Same NaN handling as solve_leaf: only a smaller score is rejected.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let keep = ok && !(score < newton_score);
        if keep {
            score
        } else {
            newton_score
        }
    };
    if valid {
        score
    } else {
        f64::NAN
    }
}
