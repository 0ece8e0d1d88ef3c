//! Linear classes `clamp(<phi(s,a), theta>, 0, L)` and their epsilon-nets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{DifferenceOracle, FiniteFunctionClass, FunctionClass, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::table::CellStats;

const FEATURE_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFunctionClass {
    num_states: usize,
    num_actions: usize,
    /// one row per cell
    features: DMatrix<f64>,
    ball: f64,
    range: f64,
    clamp: bool,
    ridge: f64,
    net_eps: f64,
}

impl LinearFunctionClass {
    pub fn new(num_states: usize, num_actions: usize, features: Vec<Vec<f64>>, ball: f64, range: f64) -> Result<Self> {
        let cells = num_states * num_actions;
        if features.len() != cells {
            return Err(Error::DimensionMismatch { expected: cells, got: features.len() });
        }
        let dim = features.first().map_or(0, Vec::len);
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidClass("features must share one positive dimension".into()));
        }
        if !(ball >= 0.0) || !(range >= 0.0) {
            return Err(Error::InvalidClass("ball and range must be non-negative".into()));
        }
        let features = DMatrix::from_fn(cells, dim, |c, j| features[c][j]);
        for c in 0..cells {
            let norm = features.row(c).norm();
            if norm > 1.0 + FEATURE_NORM_TOL {
                return Err(Error::InvalidClass(format!("feature norm {norm} at cell {c} exceeds 1")));
            }
        }
        Ok(Self { num_states, num_actions, features, ball, range, clamp: true, ridge: 1.0, net_eps: 0.05 })
    }

    /// Drop the `[0, L]` clamp; the range becomes at least the ball radius.
    pub fn unclamped(mut self) -> Self {
        self.clamp = false;
        self.range = self.range.max(self.ball);
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_net_eps(mut self, eps: f64) -> Self {
        self.net_eps = eps;
        self
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn ball(&self) -> f64 {
        self.ball
    }

    pub fn is_clamped(&self) -> bool {
        self.clamp
    }

    pub fn feature(&self, cell: usize) -> DVector<f64> {
        self.features.row(cell).transpose()
    }

    pub fn evaluate(&self, theta: &DVector<f64>) -> Vec<f64> {
        let raw = &self.features * theta;
        raw.iter().map(|&v| if self.clamp { v.clamp(0.0, self.range) } else { v }).collect()
    }

    /// `sum_c weight[c] phi_c phi_c^T + lambda I`.
    pub fn gram(&self, weight: &[f64], lambda: f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut g = DMatrix::identity(d, d) * lambda;
        for (c, &w) in weight.iter().enumerate() {
            if w > 0.0 {
                let phi = self.feature(c);
                g.ger(w, &phi, &phi, 1.0);
            }
        }
        g
    }

    /// `sum_c moment[c] phi_c`.
    pub fn moment_vector(&self, moment: &[f64]) -> DVector<f64> {
        self.features.tr_mul(&DVector::from_column_slice(moment))
    }

    fn factor(&self, weight: &[f64], lambda: f64) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.gram(weight, lambda)).ok_or(Error::SingularSystem(lambda))
    }

    /// Ridge solution of the weighted normal equations, rescaled into the ball.
    pub fn ridge_solve(&self, stats: &CellStats, lambda: f64) -> Result<DVector<f64>> {
        let chol = self.factor(&stats.weight, lambda)?;
        let theta = chol.solve(&self.moment_vector(&stats.moment));
        Ok(project_to_ball(theta, self.ball))
    }

    /// Spacing of the epsilon-net grid for this dimension.
    pub fn net_spacing(&self, eps: f64) -> f64 {
        eps * (2.0 / (self.dim() as f64).sqrt()).min(1.0)
    }

    fn net_points_per_axis(&self, eps: f64) -> usize {
        if self.ball == 0.0 {
            1
        } else {
            (2.0 * self.ball / self.net_spacing(eps)).ceil() as usize + 1
        }
    }
}

fn project_to_ball(theta: DVector<f64>, ball: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm > ball {
        if norm > 0.0 {
            theta * (ball / norm)
        } else {
            theta
        }
    } else {
        theta
    }
}

impl FunctionClass for LinearFunctionClass {
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
        self.dim() as f64 * (self.net_points_per_axis(self.net_eps) as f64).ln()
    }

    fn label(&self) -> &'static str {
        "linear"
    }

    fn is_convex(&self) -> bool {
        !self.clamp
    }

    fn fit(&self, stats: &CellStats) -> Result<Vec<f64>> {
        Ok(self.evaluate(&self.ridge_solve(stats, self.ridge)?))
    }

    fn divergence_sq(&self, weight: &[f64], lambda: f64) -> Result<Vec<f64>> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        let chol = self.factor(weight, lambda)?;
        Ok((0..self.features.nrows())
            .map(|c| {
                let phi = self.feature(c);
                phi.dot(&chol.solve(&phi)).max(0.0)
            })
            .collect())
    }

    fn bonus(&self, _center: &[f64], weight: &[f64], beta: f64, lambda: f64) -> Result<Vec<f64>> {
        let scale = (beta * beta + lambda).sqrt();
        Ok(self.divergence_sq(weight, lambda)?.into_iter().map(|d| scale * d.sqrt()).collect())
    }

    fn difference_oracle<'a>(&'a self, weight: &'a [f64], cell: usize) -> Option<Box<dyn DifferenceOracle + 'a>> {
        Some(Box::new(LinearDifferenceOracle { gram: self.gram(weight, 0.0), phi: self.feature(cell) }))
    }

    fn completeness_gap(&self, target: &[f64]) -> Result<f64> {
        let net = linear_epsilon_net(self, self.net_eps, DEFAULT_ENUMERATION_CAP)?;
        net.class.completeness_gap(target)
    }

    /// `lambda_min(E_d[phi phi^T])`, the linear reduction of the coverage constant.
    fn coverage(&self, occupancy: &[f64]) -> Result<f64> {
        let cov = self.gram(occupancy, 0.0);
        Ok(SymmetricEigen::new(cov).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// Unconstrained linear differences `g = <phi, Delta>` with the penalized
/// problem solved through its normal equations.
pub struct LinearDifferenceOracle {
    gram: DMatrix<f64>,
    phi: DVector<f64>,
}

impl DifferenceOracle for LinearDifferenceOracle {
    fn minimize(&self, w: f64, anchor: f64) -> Result<(f64, f64)> {
        if w == 0.0 {
            return Ok((0.0, 0.0));
        }
        let mut system = self.gram.clone();
        system.ger(0.5 * w, &self.phi, &self.phi, 1.0);
        let chol = Cholesky::new(system).ok_or(Error::SingularSystem(0.0))?;
        let delta = chol.solve(&(&self.phi * (0.5 * w * anchor)));
        let norm = delta.dot(&(&self.gram * &delta));
        Ok((self.phi.dot(&delta), norm))
    }
}

/// A finite class covering a linear class in sup norm, with the parameters
/// behind each member.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub class: FiniteFunctionClass,
    pub params: Vec<DVector<f64>>,
    pub spacing: f64,
}

/// Axis grid with spacing at most `eps * min(1, 2/sqrt(d))`, points outside
/// the ball projected onto it, duplicates removed. Projection onto the ball
/// is non-expansive, so the covering radius stays below `eps`.
pub fn linear_epsilon_net(cls: &LinearFunctionClass, eps: f64, cap: f64) -> Result<EpsilonNet> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("net eps {eps} must be positive")));
    }
    let d = cls.dim();
    let per_axis = cls.net_points_per_axis(eps);
    let count = (per_axis as f64).powi(d as i32);
    if count > cap {
        return Err(Error::EnumerationCap { requested: count, cap });
    }
    let spacing = if per_axis > 1 { 2.0 * cls.ball / (per_axis - 1) as f64 } else { 0.0 };
    let axis: Vec<f64> = (0..per_axis).map(|i| if per_axis > 1 { -cls.ball + i as f64 * spacing } else { 0.0 }).collect();

    let mut seen = std::collections::HashSet::new();
    let mut params = Vec::new();
    let mut values = Vec::new();
    let mut idx = vec![0usize; d];
    for _ in 0..count as usize {
        let theta = project_to_ball(DVector::from_iterator(d, idx.iter().map(|&i| axis[i])), cls.ball);
        let key: Vec<u64> = theta.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            values.extend(cls.evaluate(&theta));
            params.push(theta);
        }
        // odometer, last coordinate fastest
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < per_axis {
                break;
            }
            idx[j] = 0;
        }
    }
    let (s, a) = (cls.num_states, cls.num_actions);
    let class = if cls.clamp {
        FiniteFunctionClass::new(s, a, cls.range, values)?
    } else {
        FiniteFunctionClass::new_signed(s, a, cls.range, values)?
    };
    Ok(EpsilonNet { class, params, spacing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(cells: usize) -> LinearFunctionClass {
        LinearFunctionClass::new(1, cells, vec![vec![1.0]; cells], 1.0, 1.0).unwrap()
    }

    #[test]
    fn degenerate_ball_gives_zero_function() {
        let cls = LinearFunctionClass::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.0, 1.0).unwrap();
        let net = linear_epsilon_net(&cls, 0.1, 1e6).unwrap();
        assert_eq!(net.class.len(), 1);
        assert_eq!(net.class.member(0), &[0.0, 0.0]);
    }

    #[test]
    fn one_dimensional_net_has_five_members() {
        let cls = one_d(1).unclamped();
        let net = linear_epsilon_net(&cls, 0.5, 1e6).unwrap();
        let thetas: Vec<f64> = net.params.iter().map(|t| t[0]).collect();
        assert_eq!(thetas, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn two_dimensional_net_is_projected_grid() {
        let cls = LinearFunctionClass::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, 1.0).unwrap().unclamped();
        let net = linear_epsilon_net(&cls, 0.5, 1e6).unwrap();
        assert!(net.class.len() <= 25);
        assert!(net.params.iter().all(|t| t.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn net_cap_enforced() {
        let cls = LinearFunctionClass::new(1, 3, vec![vec![0.5; 3]; 3], 1.0, 1.0).unwrap();
        assert!(matches!(linear_epsilon_net(&cls, 1e-3, 1e6), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn feature_norm_checked() {
        assert!(LinearFunctionClass::new(1, 1, vec![vec![1.0, 0.5]], 1.0, 1.0).is_err());
    }

    #[test]
    fn divergence_scalar_closed_form() {
        let cls = one_d(1);
        for k in [0usize, 1, 7, 100] {
            let d = cls.divergence_sq(&[k as f64], 1.0).unwrap();
            assert!((d[0] - 1.0 / (k as f64 + 1.0)).abs() < 1e-14);
            let b = cls.bonus(&[0.0], &[k as f64], 1.0, 1.0).unwrap();
            assert!((b[0] - 2f64.sqrt() / (k as f64 + 1.0).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn null_feature_has_zero_divergence() {
        let cls = LinearFunctionClass::new(1, 2, vec![vec![0.0, 0.0], vec![0.6, 0.8]], 1.0, 1.0).unwrap();
        let d = cls.divergence_sq(&[3.0, 2.0], 1.0).unwrap();
        assert_eq!(d[0], 0.0);
        assert_eq!(cls.bonus(&[0.0, 0.0], &[3.0, 2.0], 2.0, 1.0).unwrap()[0], 0.0);
    }

    #[test]
    fn one_hot_coverage_is_min_occupancy() {
        let cls = LinearFunctionClass::new(1, 2, vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0, 1.0).unwrap();
        assert!((cls.coverage(&[0.3, 0.7]).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn difference_oracle_matches_scalar_solution() {
        // G = 4, phi = 1: g = (w/2) c / (4 + w/2)
        let cls = one_d(1).unclamped();
        let weight = [4.0];
        let o = cls.difference_oracle(&weight, 0).unwrap();
        let (g, n) = o.minimize(8.0, 6.0).unwrap();
        assert!((g - 3.0).abs() < 1e-14);
        assert!((n - 36.0).abs() < 1e-12);
    }
}
