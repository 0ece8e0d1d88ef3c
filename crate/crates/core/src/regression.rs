//! Weighted least-squares oracle.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::class::{FiniteFunctionClass, LinearFunctionClass};
use crate::error::{Error, Result};
use crate::table::CellStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub cell: usize,
    pub target: f64,
    /// `sigma(z_k) >= 1`
    pub sigma: f64,
}

/// Weighted regression data: minimize `sum_k (f(z_k) - y_k)^2 / sigma_k^2`
/// (plus `lambda ||theta||^2` for linear classes).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegressionProblem {
    pub samples: Vec<Sample>,
    pub lambda: f64,
}

impl RegressionProblem {
    pub fn new(samples: Vec<Sample>, lambda: f64) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| !(s.sigma >= 1.0)) {
            return Err(Error::InvalidParameter(format!("regression weight sigma = {} below 1", s.sigma)));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge {lambda} must be non-negative")));
        }
        Ok(Self { samples, lambda })
    }

    /// Aggregate into per-cell sufficient statistics.
    pub fn stats(&self, num_cells: usize) -> Result<CellStats> {
        let mut st = CellStats::empty(num_cells);
        for s in &self.samples {
            if s.cell >= num_cells {
                return Err(Error::DimensionMismatch { expected: num_cells, got: s.cell + 1 });
            }
            let w = 1.0 / (s.sigma * s.sigma);
            st.weight[s.cell] += w;
            st.moment[s.cell] += w * s.target;
            st.square[s.cell] += w * s.target * s.target;
        }
        Ok(st)
    }

    /// Objective of a value table, summed sample by sample.
    pub fn objective(&self, f: &[f64]) -> f64 {
        self.samples.iter().map(|s| (f[s.cell] - s.target).powi(2) / (s.sigma * s.sigma)).sum()
    }
}

/// Index of the minimizing member; ties go to the lowest index, and an empty
/// sample returns member 0.
pub fn weighted_least_squares_finite(cls: &FiniteFunctionClass, prob: &RegressionProblem) -> Result<usize> {
    use crate::class::FunctionClass;
    Ok(cls.argmin(&prob.stats(cls.num_cells())?))
}

/// `(sum phi phi^T / sigma^2 + lambda I)^{-1} sum phi y / sigma^2`, rescaled into the ball.
pub fn weighted_ridge_linear(cls: &LinearFunctionClass, prob: &RegressionProblem) -> Result<DVector<f64>> {
    use crate::class::FunctionClass;
    cls.ridge_solve(&prob.stats(cls.num_cells())?, prob.lambda)
}
