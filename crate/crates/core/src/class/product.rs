//! Classes that factor over cells, with exact closed-form oracles.
//!
//! For a product class the sup in the divergence and the max in the bonus
//! are attained by members that differ from each other (or from the center)
//! in the query cell only, so both reduce to one-dimensional problems.

use super::{nearest_level, DifferenceOracle, FunctionClass};
use crate::error::{Error, Result};
use crate::table::CellStats;

fn product_divergence(weight: &[f64], lambda: f64, range: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    let l2 = range * range;
    Ok(weight.iter().map(|w| l2 / (l2 * w + lambda)).collect())
}

fn min_occupancy(range: f64, occupancy: &[f64]) -> f64 {
    if range == 0.0 {
        return f64::INFINITY;
    }
    occupancy.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Every table with values on the uniform grid `{0, L/(levels-1), ..., L}`.
///
/// Same members (and the same tie-breaking) as the enumerated
/// [`build_grid_class`](super::build_grid_class), without the enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct GridClass {
    num_states: usize,
    num_actions: usize,
    levels: usize,
    range: f64,
}

impl GridClass {
    pub fn new(num_states: usize, num_actions: usize, levels: usize, range: f64) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidClass(format!("grid needs at least 2 levels, got {levels}")));
        }
        if !(range >= 0.0) {
            return Err(Error::InvalidClass(format!("range {range} must be non-negative")));
        }
        Ok(Self { num_states, num_actions, levels, range })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn step(&self) -> f64 {
        self.range / (self.levels - 1) as f64
    }

    fn level_values(&self) -> impl Iterator<Item = f64> + '_ {
        let step = self.step();
        (0..self.levels).map(move |i| i as f64 * step)
    }
}

impl FunctionClass for GridClass {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn range(&self) -> f64 {
        self.range
    }

    fn log_cardinality(&self) -> f64 {
        if self.range == 0.0 {
            0.0
        } else {
            self.num_cells() as f64 * (self.levels as f64).ln()
        }
    }

    fn label(&self) -> &'static str {
        "grid"
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn fit(&self, stats: &CellStats) -> Result<Vec<f64>> {
        let step = self.step();
        Ok((0..stats.num_cells())
            .map(|c| if stats.weight[c] > 0.0 { nearest_level(stats.moment[c] / stats.weight[c], step, self.levels) } else { 0.0 })
            .collect())
    }

    fn divergence_sq(&self, weight: &[f64], lambda: f64) -> Result<Vec<f64>> {
        product_divergence(weight, lambda, self.range)
    }

    fn bonus(&self, center: &[f64], weight: &[f64], beta: f64, _lambda: f64) -> Result<Vec<f64>> {
        let beta_sq = beta * beta;
        Ok(center
            .iter()
            .zip(weight)
            .map(|(&c, &w)| {
                self.level_values()
                    .filter(|&v| w <= 0.0 || w * (v - c) * (v - c) <= beta_sq)
                    .map(|v| (v - c).abs())
                    .fold(0.0, f64::max)
            })
            .collect())
    }

    fn difference_oracle<'a>(&'a self, _weight: &'a [f64], _cell: usize) -> Option<Box<dyn DifferenceOracle + 'a>> {
        None
    }

    fn completeness_gap(&self, target: &[f64]) -> Result<f64> {
        let step = self.step();
        Ok(target.iter().map(|&t| (nearest_level(t, step, self.levels) - t).abs()).fold(0.0, f64::max))
    }

    fn coverage(&self, occupancy: &[f64]) -> Result<f64> {
        Ok(min_occupancy(self.range, occupancy))
    }
}

/// The box `[0, L]^{SA}`: convex and closed under every Bellman backup that
/// stays in range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularClass {
    num_states: usize,
    num_actions: usize,
    range: f64,
    net_levels: usize,
}

impl TabularClass {
    /// `net_levels` only sets the `ln N` surrogate, `SA ln(net_levels)`.
    pub fn new(num_states: usize, num_actions: usize, range: f64, net_levels: usize) -> Result<Self> {
        if !(range >= 0.0) {
            return Err(Error::InvalidClass(format!("range {range} must be non-negative")));
        }
        if net_levels < 2 {
            return Err(Error::InvalidClass("net_levels must be at least 2".into()));
        }
        Ok(Self { num_states, num_actions, range, net_levels })
    }
}

impl FunctionClass for TabularClass {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn range(&self) -> f64 {
        self.range
    }

    fn log_cardinality(&self) -> f64 {
        self.num_cells() as f64 * (self.net_levels as f64).ln()
    }

    fn label(&self) -> &'static str {
        "tabular"
    }

    fn is_convex(&self) -> bool {
        true
    }

    fn fit(&self, stats: &CellStats) -> Result<Vec<f64>> {
        Ok((0..stats.num_cells())
            .map(|c| if stats.weight[c] > 0.0 { (stats.moment[c] / stats.weight[c]).clamp(0.0, self.range) } else { 0.0 })
            .collect())
    }

    fn divergence_sq(&self, weight: &[f64], lambda: f64) -> Result<Vec<f64>> {
        product_divergence(weight, lambda, self.range)
    }

    fn bonus(&self, center: &[f64], weight: &[f64], beta: f64, _lambda: f64) -> Result<Vec<f64>> {
        Ok(center
            .iter()
            .zip(weight)
            .map(|(&c, &w)| {
                let reach = c.max(self.range - c).max(0.0);
                if w > 0.0 {
                    (beta / w.sqrt()).min(reach)
                } else {
                    reach
                }
            })
            .collect())
    }

    fn difference_oracle<'a>(&'a self, weight: &'a [f64], cell: usize) -> Option<Box<dyn DifferenceOracle + 'a>> {
        Some(Box::new(TabularDifferenceOracle { weight: weight[cell], range: self.range }))
    }

    fn completeness_gap(&self, target: &[f64]) -> Result<f64> {
        Ok(target.iter().map(|&t| (t.clamp(0.0, self.range) - t).abs()).fold(0.0, f64::max))
    }

    fn coverage(&self, occupancy: &[f64]) -> Result<f64> {
        Ok(min_occupancy(self.range, occupancy))
    }
}

/// Differences of box members are the box `[-L, L]^{SA}`; the penalized
/// problem decouples and only the query cell moves.
pub struct TabularDifferenceOracle {
    weight: f64,
    range: f64,
}

impl DifferenceOracle for TabularDifferenceOracle {
    fn minimize(&self, w: f64, anchor: f64) -> Result<(f64, f64)> {
        let denom = self.weight + 0.5 * w;
        let g = if denom > 0.0 { (0.5 * w * anchor / denom).clamp(-self.range, self.range) } else { 0.0 };
        Ok((g, self.weight * g * g))
    }
}
