//! Bonus oracles: exhaustive, closed form, and the regression-driven binary
//! search over the difference class.

use serde::{Deserialize, Serialize};

use crate::class::{DifferenceOracle, FiniteFunctionClass, FunctionClass, LinearFunctionClass};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};

pub const MAX_SEARCH_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusProvenance {
    Exhaustive,
    ClosedForm,
    LinearClosedForm,
    BinarySearch,
}

/// How the planner obtains its bonus tables.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BonusMethod {
    /// The class's own oracle (exhaustive or closed form).
    #[default]
    Native,
    /// Binary search at every cell with precision `alpha`.
    BinarySearch { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusFunction {
    pub values: Vec<f64>,
    pub provenance: BonusProvenance,
    /// Set when the binary search ran on a class without the convexity it needs.
    pub heuristic: bool,
}

/// Inputs shared by the bonus routines.
#[derive(Debug, Clone, PartialEq)]
pub struct BonusRequest {
    pub center: Vec<f64>,
    pub beta: f64,
    /// per-cell design weights `sum 1/sigma^2`
    pub weight: Vec<f64>,
    pub lambda: f64,
}

/// `max |f(z) - center(z)|` over members with `||f - center||^2 <= beta^2`.
pub fn bonus_exhaustive(cls: &FiniteFunctionClass, req: &BonusRequest) -> Vec<f64> {
    cls.bonus_exhaustive(&req.center, &req.weight, req.beta)
}

/// `sqrt(beta^2 + lambda) * ||phi(z)||_{Sigma^{-1}}`.
pub fn bonus_linear(cls: &LinearFunctionClass, req: &BonusRequest) -> Result<Vec<f64>> {
    cls.bonus(&req.center, &req.weight, req.beta, req.lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub value: f64,
    pub oracle_calls: usize,
    pub w_high: f64,
    pub delta: f64,
}

impl SearchOutcome {
    /// `ceil(log2(w_H / Delta)) + 2`.
    pub fn call_bound(&self) -> usize {
        if self.w_high <= 0.0 || self.delta <= 0.0 {
            return 2;
        }
        (self.w_high / self.delta).log2().ceil().max(0.0) as usize + 2
    }
}

/// Bisection on the penalty weight of
/// `R(g, w) = ||g||^2 + (w/2) (g(z) - 2(L+1))^2`.
///
/// `budget` is the squared radius: the feasibility test compares `||g||^2`
/// against it, and it also sets the initial `w_H = budget / (alpha (L+1))`
/// and the stopping width `Delta = alpha budget / (8 (L+1)^3)`.
pub fn binary_search(oracle: &dyn DifferenceOracle, budget: f64, alpha: f64, range: f64) -> Result<SearchOutcome> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("precision {alpha} must be positive")));
    }
    if !(budget >= 0.0) {
        return Err(Error::InvalidParameter(format!("budget {budget} must be non-negative")));
    }
    let l1 = range + 1.0;
    let anchor = 2.0 * l1;
    let (mut w_lo, mut w_hi) = (0.0, budget / (alpha * l1));
    let delta = alpha * budget / (8.0 * l1.powi(3));
    let mut z_lo = 0.0;
    let (mut z_hi, _) = oracle.minimize(w_hi, anchor)?;
    let mut calls = 1;
    let w_high = w_hi;
    while (z_hi - z_lo).abs() > alpha && (w_hi - w_lo).abs() > delta {
        if calls > MAX_SEARCH_ITERATIONS {
            return Err(Error::NonTerminating(MAX_SEARCH_ITERATIONS));
        }
        let w_mid = 0.5 * (w_hi + w_lo);
        let (z_mid, norm) = oracle.minimize(w_mid, anchor)?;
        calls += 1;
        if norm > budget {
            w_hi = w_mid;
            z_hi = z_mid;
        } else {
            w_lo = w_mid;
            z_lo = z_mid;
        }
    }
    Ok(SearchOutcome { value: z_hi, oracle_calls: calls, w_high, delta })
}

/// Binary-search bonus at one cell; `beta` is the (unsquared) radius.
pub fn bonus_binary_search(cls: &dyn FunctionClass, weight: &[f64], beta: f64, alpha: f64, cell: usize) -> Result<(SearchOutcome, bool)> {
    let oracle = cls
        .difference_oracle(weight, cell)
        .ok_or_else(|| Error::InvalidClass(format!("{} class has no difference oracle", cls.label())))?;
    let outcome = binary_search(oracle.as_ref(), beta * beta, alpha, cls.range())?;
    Ok((outcome, !cls.is_convex()))
}

/// Bonus table for the planner.
pub fn compute_bonus(
    cls: &dyn FunctionClass,
    method: BonusMethod,
    center: &[f64],
    weight: &[f64],
    beta: f64,
    lambda: f64,
    exec: Execution,
) -> Result<BonusFunction> {
    match method {
        BonusMethod::Native => {
            let provenance = match cls.label() {
                "finite" => BonusProvenance::Exhaustive,
                "linear" => BonusProvenance::LinearClosedForm,
                _ => BonusProvenance::ClosedForm,
            };
            Ok(BonusFunction { values: cls.bonus(center, weight, beta, lambda)?, provenance, heuristic: false })
        }
        BonusMethod::BinarySearch { alpha } => {
            let cells = exec::map_range(exec, cls.num_cells(), |c| bonus_binary_search(cls, weight, beta, alpha, c));
            let mut values = Vec::with_capacity(cells.len());
            let mut heuristic = false;
            for r in cells {
                let (outcome, h) = r?;
                values.push(outcome.value.max(0.0));
                heuristic |= h;
            }
            Ok(BonusFunction { values, provenance: BonusProvenance::BinarySearch, heuristic })
        }
    }
}
