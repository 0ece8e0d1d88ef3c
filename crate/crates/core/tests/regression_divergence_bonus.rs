use nalgebra::DVector;
use pnlsvi::bonus::{binary_search, bonus_exhaustive, bonus_linear, BonusRequest};
use pnlsvi::class::{build_grid_class, linear_epsilon_net, DifferenceOracle, FiniteFunctionClass, FunctionClass, GridClass, LinearFunctionClass};
use pnlsvi::data::{rollout_dataset, split_dataset};
use pnlsvi::divergence::{d2_finite, d2_linear, DivergenceQuery};
use pnlsvi::error::Result;
use pnlsvi::experiment::config::ExperimentConfig;
use pnlsvi::experiment::verify::{binary_search_error, random_binary_search_instance};
use pnlsvi::pnlsvi::StageClasses;
use pnlsvi::regression::{weighted_least_squares_finite, weighted_ridge_linear, RegressionProblem, Sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian_elimination(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
        x[i] = (b[i] - tail) / m[i][i];
    }
    x
}

fn random_features(rng: &mut ChaCha8Rng, cells: usize, d: usize) -> Vec<Vec<f64>> {
    let scale = 1.0 / (d as f64).sqrt();
    (0..cells).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0) * scale).collect()).collect()
}

fn random_samples(rng: &mut ChaCha8Rng, cells: usize, n: usize) -> Vec<Sample> {
    (0..n).map(|_| Sample { cell: rng.gen_range(0..cells), target: rng.gen_range(0.0..1.0), sigma: rng.gen_range(1.0..3.0) }).collect()
}

fn one_hot(cells: usize) -> Vec<Vec<f64>> {
    (0..cells).map(|c| (0..cells).map(|j| if j == c { 1.0 } else { 0.0 }).collect()).collect()
}

#[test]
fn ridge_matches_gaussian_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let features = random_features(&mut rng, 6, 3);
        let cls = LinearFunctionClass::new(2, 3, features.clone(), 1e6, 1.0).unwrap();
        let prob = RegressionProblem::new(random_samples(&mut rng, 6, 50), 0.1).unwrap();
        let theta = weighted_ridge_linear(&cls, &prob).unwrap();
        let mut m = vec![vec![0.0; 3]; 3];
        let mut b = vec![0.0; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 0.1;
        }
        for s in &prob.samples {
            let phi = &features[s.cell];
            let w = 1.0 / (s.sigma * s.sigma);
            for i in 0..3 {
                b[i] += w * phi[i] * s.target;
                for j in 0..3 {
                    m[i][j] += w * phi[i] * phi[j];
                }
            }
        }
        let expected = gaussian_elimination(m, b);
        for i in 0..3 {
            assert!((theta[i] - expected[i]).abs() < 1e-8);
        }
    }
}

#[test]
fn one_hot_grid_agrees_with_unregularized_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = GridClass::new(2, 2, 9, 1.0).unwrap();
    let linear = LinearFunctionClass::new(2, 2, one_hot(4), 10.0, 1.0).unwrap();
    for _ in 0..20 {
        let mut samples = random_samples(&mut rng, 4, 40);
        // every cell observed so the unregularized system is solvable
        samples.extend((0..4).map(|c| Sample { cell: c, target: 0.5, sigma: 1.0 }));
        let prob = RegressionProblem::new(samples, 0.0).unwrap();
        let stats = prob.stats(4).unwrap();
        let theta = weighted_ridge_linear(&linear, &prob).unwrap();
        let fitted = grid.fit(&stats).unwrap();
        for c in 0..4 {
            assert!((fitted[c] - theta[c]).abs() <= grid.step() / 2.0 + 1e-12);
        }
    }
}

#[test]
fn finite_oracle_attains_the_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cls = build_grid_class(2, 2, 4, 1.0, 1e6).unwrap();
    for _ in 0..30 {
        let prob = RegressionProblem::new(random_samples(&mut rng, 4, 25), 0.0).unwrap();
        let chosen = weighted_least_squares_finite(&cls, &prob).unwrap();
        let best = (0..cls.len()).map(|n| prob.objective(cls.member(n))).fold(f64::INFINITY, f64::min);
        assert!((prob.objective(cls.member(chosen)) - best).abs() < 1e-9);
    }
}

#[test]
fn rejects_small_sigma() {
    assert!(RegressionProblem::new(vec![Sample { cell: 0, target: 0.0, sigma: 0.5 }], 0.0).is_err());
    assert!(DivergenceQuery::new(2, &[(0, 0.9)], 1.0).is_err());
    assert!(DivergenceQuery::new(2, &[], 0.0).is_err());
}

#[test]
fn scalar_divergence_closed_form() {
    let cls = LinearFunctionClass::new(1, 1, vec![vec![1.0]], 1.0, 1.0).unwrap();
    for k in [0usize, 1, 10, 500] {
        let q = DivergenceQuery::new(1, &vec![(0, 1.0); k], 1.0).unwrap();
        let d2 = d2_linear(&cls, &q).unwrap()[0];
        assert!((d2 - 1.0 / (k as f64 + 1.0)).abs() < 1e-12);
        let req = BonusRequest { center: vec![0.0], beta: 1.0, weight: q.weight.clone(), lambda: 1.0 };
        let b = bonus_linear(&cls, &req).unwrap()[0];
        assert!((b - 2f64.sqrt() / (k as f64 + 1.0).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn null_feature_has_zero_divergence_and_bonus() {
    let cls = LinearFunctionClass::new(1, 2, vec![vec![0.0, 0.0], vec![0.6, 0.8]], 1.0, 1.0).unwrap();
    let q = DivergenceQuery::new(2, &[(1, 1.0)], 1.0).unwrap();
    assert_eq!(d2_linear(&cls, &q).unwrap()[0], 0.0);
    let req = BonusRequest { center: vec![0.0, 0.0], beta: 1.0, weight: q.weight, lambda: 1.0 };
    assert_eq!(bonus_linear(&cls, &req).unwrap()[0], 0.0);
}

#[test]
fn single_point_pair_divergence() {
    let cls = FiniteFunctionClass::new(1, 2, 1.0, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let q = DivergenceQuery::new(2, &[(0, 1.0)], 1.0).unwrap();
    assert!((d2_finite(&cls, &q).unwrap()[0] - 0.5).abs() < 1e-15);
}

#[test]
fn divergence_shrinks_with_data_on_default_scenario() {
    let cfg = ExperimentConfig::default();
    let mdp = cfg.scenario.build().unwrap();
    let mu = cfg.behavior.build(&mdp).unwrap();
    let classes = StageClasses::build(&cfg.class, mdp.num_states(), mdp.num_actions(), mdp.horizon()).unwrap();
    let max_d2 = |k: usize| {
        let split = split_dataset(&rollout_dataset(&mdp, &mu, 2 * k, 0).unwrap()).unwrap();
        let mut worst: f64 = 0.0;
        for h in 0..mdp.horizon() {
            let mut weight = vec![0.0; mdp.num_states() * mdp.num_actions()];
            for r in split.planning.stage(h) {
                weight[r.state * mdp.num_actions() + r.action] += 1.0;
            }
            let d2 = classes.first[h].divergence_sq(&weight, 1.0).unwrap();
            worst = worst.max(d2.iter().cloned().fold(0.0, f64::max));
        }
        worst
    };
    let ratio = max_d2(500) / max_d2(4000);
    assert!((4.0..=16.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linear_bonus_dominates_net_bonus() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 0.05;
    for _ in 0..10 {
        let cls = LinearFunctionClass::new(2, 2, random_features(&mut rng, 4, 2), 0.5, 1.0).unwrap().unclamped();
        let net = linear_epsilon_net(&cls, eps, 1e6).unwrap();
        let center_idx = rng.gen_range(0..net.class.len());
        let center = net.class.member(center_idx).to_vec();
        let weight: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..20.0)).collect();
        let beta = rng.gen_range(0.1..1.0);
        let req = BonusRequest { center: center.clone(), beta, weight: weight.clone(), lambda: 1.0 };
        let lin = bonus_linear(&cls, &req).unwrap();
        let exh = bonus_exhaustive(&net.class, &req);
        for c in 0..4 {
            assert!(lin[c] >= exh[c] - 2.0 * eps, "cell {c}: {} < {}", lin[c], exh[c]);
        }
    }
}

/// Independent feasibility filter + max loop.
fn brute_bonus(cls: &FiniteFunctionClass, center: &[f64], weight: &[f64], beta: f64) -> Vec<f64> {
    let mut out = vec![0.0f64; center.len()];
    for n in 0..cls.len() {
        let f = cls.member(n);
        let dist: f64 = f.iter().zip(center).zip(weight).map(|((a, b), w)| w * (a - b).powi(2)).sum();
        if dist <= beta * beta + 1e-12 {
            for c in 0..center.len() {
                out[c] = out[c].max((f[c] - center[c]).abs());
            }
        }
    }
    out
}

#[test]
fn finite_bonus_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let lambda = 1.0;
    let mut fitted_c: f64 = 0.0;
    for _ in 0..30 {
        let cls = build_grid_class(2, 2, 4, 1.0, 1e6).unwrap();
        let center = cls.member(rng.gen_range(0..cls.len())).to_vec();
        let weight: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..10.0)).collect();
        let beta = rng.gen_range(0.05..2.0);
        let req = BonusRequest { center: center.clone(), beta, weight: weight.clone(), lambda };
        let b = bonus_exhaustive(&cls, &req);
        let brute = brute_bonus(&cls, &center, &weight, beta);
        let d2 = cls.divergence_sq(&weight, lambda).unwrap();
        for c in 0..4 {
            assert!((b[c] - brute[c]).abs() < 1e-12);
            let scale = d2[c].sqrt() * (beta * beta + lambda).sqrt();
            if scale > 0.0 {
                fitted_c = fitted_c.max(b[c] / scale);
            }
        }
    }
    assert!(fitted_c <= 4.0, "fitted C {fitted_c}");
}

#[test]
fn vacuous_and_pinned_constraints() {
    let cls = build_grid_class(1, 2, 3, 1.0, 1e6).unwrap();
    let center = vec![0.5, 0.5];
    let loose = BonusRequest { center: center.clone(), beta: 100.0, weight: vec![1.0, 1.0], lambda: 1.0 };
    assert_eq!(bonus_exhaustive(&cls, &loose), vec![0.5, 0.5]);
    let pinned = BonusRequest { center, beta: 0.0, weight: vec![1.0, 1.0], lambda: 1.0 };
    assert_eq!(bonus_exhaustive(&cls, &pinned), vec![0.0, 0.0]);
}

struct ZeroClass;

impl DifferenceOracle for ZeroClass {
    fn minimize(&self, _w: f64, _anchor: f64) -> Result<(f64, f64)> {
        Ok((0.0, 0.0))
    }
}

#[test]
fn search_initialization_constants() {
    let out = binary_search(&ZeroClass, 1.0, 0.01, 2.0).unwrap();
    assert!((out.w_high - 100.0 / 3.0).abs() < 1e-9);
    assert!((out.delta - 0.01 / 216.0).abs() < 1e-12);
    assert_eq!(out.value, 0.0);
    assert_eq!(out.oracle_calls, 1);
}

#[test]
fn linear_binary_search_within_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let inst = random_binary_search_instance(&mut rng).unwrap();
        let (err, within_bound) = binary_search_error(&inst, 1e-3).unwrap();
        assert!(err <= 1e-3, "error {err}");
        assert!(within_bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn divergence_monotonicity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cls = build_grid_class(1, 3, 3, 1.0, 1e6).unwrap();
        let points: Vec<(usize, f64)> = (0..rng.gen_range(0..6)).map(|_| (rng.gen_range(0..3), rng.gen_range(1.0..2.0))).collect();
        let base = d2_finite(&cls, &DivergenceQuery::new(3, &points, 1.0).unwrap()).unwrap();
        let mut more = points.clone();
        more.push((rng.gen_range(0..3), rng.gen_range(1.0..2.0)));
        let appended = d2_finite(&cls, &DivergenceQuery::new(3, &more, 1.0).unwrap()).unwrap();
        let heavier = d2_finite(&cls, &DivergenceQuery::new(3, &points, 2.0).unwrap()).unwrap();
        let wider: Vec<(usize, f64)> = points.iter().map(|&(c, s)| (c, s * 1.5)).collect();
        let widened = d2_finite(&cls, &DivergenceQuery::new(3, &wider, 1.0).unwrap()).unwrap();
        for c in 0..3 {
            prop_assert!(appended[c] <= base[c] + 1e-15);
            prop_assert!(base[c] <= 1.0 + 1e-15);
            if base[c] > 0.0 {
                prop_assert!(heavier[c] < base[c]);
            }
            prop_assert!(widened[c] + 1e-15 >= base[c]);
        }
    }

    #[test]
    fn linear_divergence_monotone_in_data(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cls = LinearFunctionClass::new(2, 2, random_features(&mut rng, 4, 2), 1.0, 1.0).unwrap();
        let points: Vec<(usize, f64)> = (0..5).map(|_| (rng.gen_range(0..4), rng.gen_range(1.0..2.0))).collect();
        let base = d2_linear(&cls, &DivergenceQuery::new(4, &points, 1.0).unwrap()).unwrap();
        let mut more = points.clone();
        more.push((rng.gen_range(0..4), 1.0));
        let appended = d2_linear(&cls, &DivergenceQuery::new(4, &more, 1.0).unwrap()).unwrap();
        for c in 0..4 {
            prop_assert!(appended[c] <= base[c] + 1e-12);
        }
    }

    #[test]
    fn bonus_monotone_in_beta(seed in any::<u64>(), b1 in 0.0f64..2.0, b2 in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (b1.min(b2), b1.max(b2));
        let cls = build_grid_class(1, 3, 3, 1.0, 1e6).unwrap();
        let center = cls.member(rng.gen_range(0..cls.len())).to_vec();
        let weight: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..5.0)).collect();
        let small = bonus_exhaustive(&cls, &BonusRequest { center: center.clone(), beta: lo, weight: weight.clone(), lambda: 1.0 });
        let large = bonus_exhaustive(&cls, &BonusRequest { center: center.clone(), beta: hi, weight: weight.clone(), lambda: 1.0 });
        let grid = GridClass::new(1, 3, 3, 1.0).unwrap();
        let gs = grid.bonus(&center, &weight, lo, 1.0).unwrap();
        let gl = grid.bonus(&center, &weight, hi, 1.0).unwrap();
        for c in 0..3 {
            prop_assert!(small[c] <= large[c]);
            prop_assert!(small[c] >= 0.0);
            prop_assert!(gs[c] <= gl[c] + 1e-12);
            prop_assert!(gs[c] + 1e-12 >= small[c]);
        }
    }

    #[test]
    fn finite_argmin_ignores_uniform_sigma_scale(seed in any::<u64>(), scale in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cls = build_grid_class(1, 3, 4, 1.0, 1e6).unwrap();
        let samples = random_samples(&mut rng, 3, 12);
        let scaled: Vec<Sample> = samples.iter().map(|s| Sample { sigma: s.sigma * scale, ..*s }).collect();
        let a = weighted_least_squares_finite(&cls, &RegressionProblem::new(samples, 0.0).unwrap()).unwrap();
        let b = weighted_least_squares_finite(&cls, &RegressionProblem::new(scaled, 0.0).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn ridge_solution_stays_in_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let cls = LinearFunctionClass::new(2, 2, random_features(&mut rng, 4, 2), 0.1, 1.0).unwrap();
    let prob = RegressionProblem::new(random_samples(&mut rng, 4, 30), 1.0).unwrap();
    let theta: DVector<f64> = weighted_ridge_linear(&cls, &prob).unwrap();
    assert!(theta.norm() <= 0.1 + 1e-12);
}
