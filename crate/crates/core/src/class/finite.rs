//! Explicitly enumerated classes and the exhaustive oracles over them.

use super::{DifferenceOracle, FunctionClass, DEFAULT_PAIR_BUDGET};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::table::CellStats;

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFunctionClass {
    num_states: usize,
    num_actions: usize,
    range: f64,
    /// `members[n * SA + c]`
    members: Vec<f64>,
    pair_budget: f64,
    exec: Execution,
}

impl FiniteFunctionClass {
    /// Members with every value in `[0, range]`.
    pub fn new(num_states: usize, num_actions: usize, range: f64, members: Vec<f64>) -> Result<Self> {
        Self::checked(num_states, num_actions, range, members, 0.0)
    }

    /// Members with values in `[-range, range]` (unclamped linear nets, difference classes).
    pub fn new_signed(num_states: usize, num_actions: usize, range: f64, members: Vec<f64>) -> Result<Self> {
        Self::checked(num_states, num_actions, range, members, -range)
    }

    fn checked(num_states: usize, num_actions: usize, range: f64, members: Vec<f64>, lo: f64) -> Result<Self> {
        let cells = num_states * num_actions;
        if cells == 0 || members.is_empty() || !members.len().is_multiple_of(cells) {
            return Err(Error::InvalidClass(format!("{} values do not form whole members over {cells} cells", members.len())));
        }
        if !(range >= 0.0) {
            return Err(Error::InvalidClass(format!("range {range} must be non-negative")));
        }
        if let Some(v) = members.iter().find(|v| !(lo..=range).contains(*v)) {
            return Err(Error::InvalidClass(format!("member value {v} outside [{lo}, {range}]")));
        }
        Ok(Self { num_states, num_actions, range, members, pair_budget: DEFAULT_PAIR_BUDGET, exec: Execution::default() })
    }

    pub fn with_pair_budget(mut self, budget: f64) -> Self {
        self.pair_budget = budget;
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn len(&self) -> usize {
        self.members.len() / self.cells()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    fn cells(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn member(&self, n: usize) -> &[f64] {
        let c = self.cells();
        &self.members[n * c..(n + 1) * c]
    }

    /// Drop repeated value tables, keeping first occurrences.
    pub fn dedup(&self) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut kept = Vec::new();
        for n in 0..self.len() {
            let key: Vec<u64> = self.member(n).iter().map(|v| (v + 0.0).to_bits()).collect();
            if seen.insert(key) {
                kept.extend_from_slice(self.member(n));
            }
        }
        Self { members: kept, ..self.clone() }
    }

    fn check_pairs(&self) -> Result<()> {
        let n = self.len() as f64;
        let pairs = n * (n - 1.0) / 2.0;
        if pairs > self.pair_budget {
            return Err(Error::PairBudget { requested: pairs, budget: self.pair_budget });
        }
        Ok(())
    }

    /// Index of the weighted least-squares minimizer; lowest index on ties.
    pub fn argmin(&self, stats: &CellStats) -> usize {
        let losses = exec::map_range(self.exec, self.len(), |n| stats.loss(self.member(n)));
        let mut best = 0;
        for (n, &l) in losses.iter().enumerate().skip(1) {
            if l < losses[best] {
                best = n;
            }
        }
        best
    }

    /// Weighted squared distance `sum_c weight[c] (f_c - g_c)^2`.
    fn weighted_sq(weight: &[f64], f: &[f64], g: &[f64]) -> f64 {
        weight.iter().zip(f.iter().zip(g)).map(|(w, (x, y))| if *w > 0.0 { w * (x - y) * (x - y) } else { 0.0 }).sum()
    }

    /// Exhaustive bonus for an arbitrary center table.
    pub fn bonus_exhaustive(&self, center: &[f64], weight: &[f64], beta: f64) -> Vec<f64> {
        let beta_sq = beta * beta;
        let cells = self.cells();
        exec::fold_range(
            self.exec,
            self.len(),
            vec![0.0; cells],
            |mut acc, n| {
                let f = self.member(n);
                if Self::weighted_sq(weight, f, center) <= beta_sq {
                    for c in 0..cells {
                        acc[c] = f64::max(acc[c], (f[c] - center[c]).abs());
                    }
                }
                acc
            },
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        )
    }

    fn for_each_row<A, F, M>(&self, init: A, fold: F, merge: M) -> A
    where
        A: Clone + Send + Sync,
        F: Fn(A, usize, usize) -> A + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        let n = self.len();
        // rows shrink with i, so small chunks keep the pool balanced
        exec::fold_chunked(
            self.exec,
            n,
            4,
            init,
            |mut acc, i| {
                for j in i + 1..n {
                    acc = fold(acc, i, j);
                }
                acc
            },
            merge,
        )
    }
}

impl FunctionClass for FiniteFunctionClass {
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
        (self.len() as f64).ln()
    }

    fn label(&self) -> &'static str {
        "finite"
    }

    fn is_convex(&self) -> bool {
        false
    }

    fn fit(&self, stats: &CellStats) -> Result<Vec<f64>> {
        Ok(self.member(self.argmin(stats)).to_vec())
    }

    fn divergence_sq(&self, weight: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        self.check_pairs()?;
        let cells = self.cells();
        Ok(self.for_each_row(
            vec![0.0; cells],
            |mut acc, i, j| {
                let (f, g) = (self.member(i), self.member(j));
                let denom = Self::weighted_sq(weight, f, g) + lambda;
                for c in 0..cells {
                    let d = f[c] - g[c];
                    acc[c] = f64::max(acc[c], d * d / denom);
                }
                acc
            },
            |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
        ))
    }

    fn bonus(&self, center: &[f64], weight: &[f64], beta: f64, _lambda: f64) -> Result<Vec<f64>> {
        Ok(self.bonus_exhaustive(center, weight, beta))
    }

    fn difference_oracle<'a>(&'a self, weight: &'a [f64], cell: usize) -> Option<Box<dyn DifferenceOracle + 'a>> {
        PairDifferenceOracle::new(self, weight, cell).ok().map(|o| Box::new(o) as Box<dyn DifferenceOracle>)
    }

    fn completeness_gap(&self, target: &[f64]) -> Result<f64> {
        let dists = exec::map_range(self.exec, self.len(), |n| {
            self.member(n).iter().zip(target).map(|(f, t)| (f - t).abs()).fold(0.0, f64::max)
        });
        Ok(dists.into_iter().fold(f64::INFINITY, f64::min))
    }

    fn coverage(&self, occupancy: &[f64]) -> Result<f64> {
        self.check_pairs()?;
        Ok(self.for_each_row(
            f64::INFINITY,
            |acc, i, j| {
                let (f, g) = (self.member(i), self.member(j));
                let mut sup: f64 = 0.0;
                let mut mean = 0.0;
                for c in 0..f.len() {
                    let d = f[c] - g[c];
                    sup = sup.max(d.abs());
                    mean += occupancy[c] * d * d;
                }
                // identical tables carry no information about coverage
                if sup > 0.0 {
                    acc.min(mean / (sup * sup))
                } else {
                    acc
                }
            },
            f64::min,
        ))
    }
}

/// Enumerate every table with values on `{0, L/(levels-1), ..., L}`.
///
/// Member `n` writes `n` in base `levels` with cell 0 as the most significant
/// digit, so member 0 is the zero table and lower indices prefer lower values
/// in earlier cells. `L = 0` collapses to the single zero table.
pub fn build_grid_class(num_states: usize, num_actions: usize, levels: usize, range: f64, cap: f64) -> Result<FiniteFunctionClass> {
    if levels < 2 {
        return Err(Error::InvalidClass(format!("grid needs at least 2 levels, got {levels}")));
    }
    let cells = num_states * num_actions;
    if range == 0.0 {
        return FiniteFunctionClass::new(num_states, num_actions, 0.0, vec![0.0; cells]);
    }
    let count = (levels as f64).powi(cells as i32);
    if count > cap {
        return Err(Error::EnumerationCap { requested: count, cap });
    }
    let n = count as usize;
    let step = range / (levels - 1) as f64;
    let mut members = vec![0.0; n * cells];
    for m in 0..n {
        let mut rest = m;
        for c in (0..cells).rev() {
            members[m * cells + c] = (rest % levels) as f64 * step;
            rest /= levels;
        }
    }
    FiniteFunctionClass::new(num_states, num_actions, range, members)
}

/// Exhaustive oracle over ordered member pairs `g = f_i - f_j`.
pub struct PairDifferenceOracle {
    /// `(g(z), ||g||^2)` for each ordered pair.
    pairs: Vec<(f64, f64)>,
}

impl PairDifferenceOracle {
    pub fn new(cls: &FiniteFunctionClass, weight: &[f64], cell: usize) -> Result<Self> {
        let n = cls.len();
        if (n * n) as f64 > cls.pair_budget {
            return Err(Error::PairBudget { requested: (n * n) as f64, budget: cls.pair_budget });
        }
        let mut pairs = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let (f, g) = (cls.member(i), cls.member(j));
                pairs.push((f[cell] - g[cell], FiniteFunctionClass::weighted_sq(weight, f, g)));
            }
        }
        Ok(Self { pairs })
    }
}

impl DifferenceOracle for PairDifferenceOracle {
    fn minimize(&self, w: f64, anchor: f64) -> Result<(f64, f64)> {
        let objective = |&(gz, norm): &(f64, f64)| norm + 0.5 * w * (gz - anchor) * (gz - anchor);
        let mut best = self.pairs[0];
        for p in &self.pairs[1..] {
            if objective(p) < objective(&best) {
                best = *p;
            }
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counting() {
        let cls = build_grid_class(2, 2, 3, 2.0, 1e6).unwrap();
        assert_eq!(cls.len(), 81);
        assert!(cls.members.iter().all(|v| [0.0, 1.0, 2.0].contains(v)));
        assert_eq!(cls.member(0), &[0.0; 4]);
        assert_eq!(cls.member(1), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(cls.member(80), &[2.0; 4]);
    }

    #[test]
    fn zero_range_grid_is_singleton() {
        let cls = build_grid_class(2, 2, 2, 0.0, 1e6).unwrap();
        assert_eq!(cls.len(), 1);
        assert_eq!(cls.dedup().len(), 1);
    }

    #[test]
    fn cap_is_a_hard_error() {
        let err = build_grid_class(3, 3, 9, 1.0, 1e6).unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { .. }));
    }

    #[test]
    fn rejects_out_of_range_members() {
        assert!(FiniteFunctionClass::new(1, 2, 1.0, vec![0.0, 1.5]).is_err());
        assert!(FiniteFunctionClass::new(1, 2, 1.0, vec![0.0]).is_err());
        assert!(FiniteFunctionClass::new_signed(1, 2, 1.0, vec![-1.0, 0.5]).is_ok());
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let cls = FiniteFunctionClass::new(1, 2, 1.0, vec![0.0, 1.0, 0.5, 0.5, 0.0, 1.0]).unwrap();
        let d = cls.dedup();
        assert_eq!(d.len(), 2);
        assert_eq!(d.member(1), &[0.5, 0.5]);
    }

    #[test]
    fn pair_budget_enforced() {
        let cls = build_grid_class(1, 4, 4, 1.0, 1e6).unwrap().with_pair_budget(100.0);
        assert!(matches!(cls.divergence_sq(&[0.0; 4], 1.0), Err(Error::PairBudget { .. })));
    }
}
