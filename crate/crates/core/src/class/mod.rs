//! Hypothesis classes over `S x A`.
//!
//! Every class here is a family of tables indexed by cell `s * A + a`, so a
//! weighted sample enters only through its per-cell statistics
//! ([`CellStats`]). That turns regression objectives, divergence
//! denominators and feasibility constraints into sums over cells.

mod finite;
mod linear;
mod product;

pub use finite::{build_grid_class, FiniteFunctionClass, PairDifferenceOracle};
pub use linear::{linear_epsilon_net, EpsilonNet, LinearDifferenceOracle, LinearFunctionClass};
pub use product::{GridClass, TabularClass, TabularDifferenceOracle};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::CellStats;

/// Default cap on explicitly enumerated members.
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e6;
/// Default cap on member-pair evaluations.
pub const DEFAULT_PAIR_BUDGET: f64 = 1e7;

/// Penalized problem over the difference class `G = F - F` at a fixed query
/// cell: `min_g ||g||^2 + (w/2) (g(z) - anchor)^2`.
pub trait DifferenceOracle {
    /// Returns `(g(z), ||g||^2)` of a minimizer.
    fn minimize(&self, w: f64, anchor: f64) -> Result<(f64, f64)>;
}

pub trait FunctionClass: Send + Sync + std::fmt::Debug {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;

    fn num_cells(&self) -> usize {
        self.num_states() * self.num_actions()
    }

    /// Upper end `L` of the value range.
    fn range(&self) -> f64;

    /// `ln N`; a covering-number surrogate for continuous classes.
    fn log_cardinality(&self) -> f64;

    fn label(&self) -> &'static str;

    /// Convex in the sense needed by the binary-search bonus.
    fn is_convex(&self) -> bool;

    /// Minimizer of `sum_k (f(z_k) - y_k)^2 / sigma_k^2`, as a value table.
    fn fit(&self, stats: &CellStats) -> Result<Vec<f64>>;

    /// Squared divergence at every cell for design weights `weight[c] = sum 1/sigma^2`.
    fn divergence_sq(&self, weight: &[f64], lambda: f64) -> Result<Vec<f64>>;

    /// Bonus at every cell: the largest `|f(z) - center(z)|` over members with
    /// `sum_c weight[c] (f_c - center_c)^2 <= beta^2` (or a closed form that
    /// dominates it). `center` should be a member.
    fn bonus(&self, center: &[f64], weight: &[f64], beta: f64, lambda: f64) -> Result<Vec<f64>>;

    /// Difference-class oracle for the binary-search bonus, if available.
    fn difference_oracle<'a>(&'a self, weight: &'a [f64], cell: usize) -> Option<Box<dyn DifferenceOracle + 'a>>;

    /// `min_f max_c |f_c - target_c|`.
    fn completeness_gap(&self, target: &[f64]) -> Result<f64>;

    /// `min_{f1 != f2} E_d[(f1 - f2)^2] / ||f1 - f2||_inf^2`; `+inf` for singletons.
    fn coverage(&self, occupancy: &[f64]) -> Result<f64>;
}

/// Serializable description of a class family; instantiated per stage with
/// the stage's range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSpec {
    /// Implicit product grid with closed-form oracles.
    Grid { levels: usize },
    /// The same grid, enumerated member by member.
    EnumeratedGrid {
        levels: usize,
        #[serde(default = "default_cap")]
        enumeration_cap: f64,
        #[serde(default = "default_budget")]
        pair_budget: f64,
    },
    /// Box `[0, L]^{SA}`; `net_levels` sets the covering surrogate for `ln N`.
    Tabular {
        #[serde(default = "default_net_levels")]
        net_levels: usize,
    },
    /// Dense tensor `members[n][s][a]` on range `range`; rescaled to each stage's range.
    Explicit { range: f64, members: Vec<Vec<Vec<f64>>> },
    /// `clamp(<phi(s,a), theta>, 0, L)` with `||theta|| <= ball`.
    Linear {
        /// `features[s * A + a]`
        features: Vec<Vec<f64>>,
        ball: f64,
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default = "default_net_eps")]
        net_eps: f64,
    },
}

fn default_cap() -> f64 {
    DEFAULT_ENUMERATION_CAP
}

fn default_budget() -> f64 {
    DEFAULT_PAIR_BUDGET
}

fn default_net_levels() -> usize {
    9
}

fn default_ridge() -> f64 {
    1.0
}

fn default_net_eps() -> f64 {
    0.05
}

impl ClassSpec {
    pub fn build(&self, num_states: usize, num_actions: usize, range: f64) -> Result<Box<dyn FunctionClass>> {
        Ok(match self {
            ClassSpec::Grid { levels } => Box::new(GridClass::new(num_states, num_actions, *levels, range)?),
            ClassSpec::EnumeratedGrid { levels, enumeration_cap, pair_budget } => Box::new(
                build_grid_class(num_states, num_actions, *levels, range, *enumeration_cap)?.with_pair_budget(*pair_budget),
            ),
            ClassSpec::Tabular { net_levels } => Box::new(TabularClass::new(num_states, num_actions, range, *net_levels)?),
            ClassSpec::Explicit { range: base, members } => {
                if *base <= 0.0 {
                    return Err(Error::InvalidClass("explicit class range must be positive".into()));
                }
                let scale = range / base;
                let mut flat = Vec::new();
                for m in members {
                    if m.len() != num_states || m.iter().any(|row| row.len() != num_actions) {
                        return Err(Error::InvalidClass("explicit member shape does not match the MDP".into()));
                    }
                    flat.extend(m.iter().flatten().map(|v| v * scale));
                }
                Box::new(FiniteFunctionClass::new(num_states, num_actions, range, flat)?)
            }
            ClassSpec::Linear { features, ball, ridge, net_eps } => Box::new(
                LinearFunctionClass::new(num_states, num_actions, features.clone(), *ball, range)?
                    .with_ridge(*ridge)
                    .with_net_eps(*net_eps),
            ),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ClassSpec::Grid { .. } => "grid",
            ClassSpec::EnumeratedGrid { .. } => "enumerated_grid",
            ClassSpec::Tabular { .. } => "tabular",
            ClassSpec::Explicit { .. } => "explicit",
            ClassSpec::Linear { .. } => "linear",
        }
    }
}

/// Nearest value on `{0, step, ..., (levels-1) step}`, lower on ties.
pub(crate) fn nearest_level(x: f64, step: f64, levels: usize) -> f64 {
    if step <= 0.0 || levels < 2 {
        return 0.0;
    }
    let top = (levels - 1) as f64;
    let t = (x / step).clamp(0.0, top);
    let lo = t.floor();
    let hi = (lo + 1.0).min(top);
    let (vlo, vhi) = (lo * step, hi * step);
    if (x - vhi).abs() < (x - vlo).abs() {
        vhi
    } else {
        vlo
    }
}
