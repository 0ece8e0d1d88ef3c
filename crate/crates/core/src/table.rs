//! Dense tables over the finite state-action space.
//!
//! Every function the planner manipulates (Q-functions, class members,
//! bonuses, variance estimates) is a map `S x A -> R`, stored row-major with
//! cell index `s * num_actions + a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl StateActionTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self { num_states, num_actions, values: vec![value; num_states * num_actions] }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::DimensionMismatch { expected: num_states * num_actions, got: values.len() });
        }
        Ok(Self { num_states, num_actions, values })
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self { num_states, num_actions, values }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    #[inline]
    pub fn cell(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { num_states: self.num_states, num_actions: self.num_actions, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Lowest-index maximizing action in state `s`.
    pub fn argmax(&self, s: usize) -> usize {
        argmax_lowest(self.row(s))
    }

    /// `V(s) = max_a Q(s, a)` for every state.
    pub fn max_over_actions(&self) -> Vec<f64> {
        (0..self.num_states).map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }
}

/// Index of the first maximal entry; NaN entries never win.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Truncation `[x]_{[lo, hi]}`.
#[inline]
pub fn truncate(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

/// Per-cell sufficient statistics of a weighted sample:
/// `w_c = sum 1/sigma_k^2`, `m_c = sum y_k/sigma_k^2`, `q_c = sum y_k^2/sigma_k^2`
/// over the samples `k` that landed in cell `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub weight: Vec<f64>,
    pub moment: Vec<f64>,
    pub square: Vec<f64>,
}

impl CellStats {
    pub fn empty(num_cells: usize) -> Self {
        Self { weight: vec![0.0; num_cells], moment: vec![0.0; num_cells], square: vec![0.0; num_cells] }
    }

    pub fn num_cells(&self) -> usize {
        self.weight.len()
    }

    /// Weighted squared loss `sum_k (f(z_k) - y_k)^2 / sigma_k^2` of a table.
    pub fn loss(&self, f: &[f64]) -> f64 {
        let mut total = 0.0;
        for c in 0..self.weight.len() {
            if self.weight[c] > 0.0 {
                let v = f[c];
                total += self.weight[c] * v * v - 2.0 * self.moment[c] * v + self.square[c];
            }
        }
        total
    }
}
