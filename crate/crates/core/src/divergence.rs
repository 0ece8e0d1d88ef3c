//! Weighted `D^2`-divergence of a query point against a stage's data.

use crate::class::{FiniteFunctionClass, FunctionClass, LinearFunctionClass};
use crate::error::{Error, Result};

/// A stage slice `{z_k}` with weights `sigma(z_k)` and regularizer `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceQuery {
    /// `weight[c] = sum_{k: z_k = c} 1 / sigma(z_k)^2`
    pub weight: Vec<f64>,
    pub lambda: f64,
}

impl DivergenceQuery {
    pub fn new(num_cells: usize, points: &[(usize, f64)], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        let mut weight = vec![0.0; num_cells];
        for &(cell, sigma) in points {
            if cell >= num_cells {
                return Err(Error::DimensionMismatch { expected: num_cells, got: cell + 1 });
            }
            if !(sigma >= 1.0) {
                return Err(Error::InvalidParameter(format!("weight sigma = {sigma} below 1")));
            }
            weight[cell] += 1.0 / (sigma * sigma);
        }
        Ok(Self { weight, lambda })
    }
}

/// Pairwise supremum over the members of a finite class, at every cell.
pub fn d2_finite(cls: &FiniteFunctionClass, q: &DivergenceQuery) -> Result<Vec<f64>> {
    cls.divergence_sq(&q.weight, q.lambda)
}

/// `phi(z)^T Sigma^{-1} phi(z)` at every cell.
pub fn d2_linear(cls: &LinearFunctionClass, q: &DivergenceQuery) -> Result<Vec<f64>> {
    cls.divergence_sq(&q.weight, q.lambda)
}
