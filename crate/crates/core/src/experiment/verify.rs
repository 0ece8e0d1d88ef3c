//! Invariant suite behind the `verify` subcommand. Every check returns a
//! verdict instead of failing, so one report covers them all.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bonus::bonus_binary_search;
use crate::class::{build_grid_class, linear_epsilon_net, FiniteFunctionClass, FunctionClass, GridClass, LinearFunctionClass};
use crate::data::{rollout_dataset, split_dataset};
use crate::error::Result;
use crate::exec;
use crate::experiment::config::{ExperimentConfig, SCHEMA_VERSION};
use crate::experiment::harness::{run_cell, stage_classes, theorem_bound_rhs, theorem_bound_rhs_reversed, CellSetup, RunRecord};
use crate::experiment::scenario::{two_state_instance, BehaviorSpec};
use crate::experiment::sweep::run_sweep;
use crate::mdp::{optimal_values, EpisodicMdp};
use crate::regression::{weighted_least_squares_finite, weighted_ridge_linear, RegressionProblem, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// the measured quantity compared against `threshold`
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, metric: f64, threshold: f64, detail: String) -> Self {
        Self { name: name.into(), passed: metric <= threshold, metric, threshold, detail }
    }

    fn at_least(name: &str, metric: f64, threshold: f64, detail: String) -> Self {
        Self { name: name.into(), passed: metric >= threshold, metric, threshold, detail }
    }

    fn failed(name: &str, err: impl std::fmt::Display) -> Self {
        Self { name: name.into(), passed: false, metric: f64::NAN, threshold: f64::NAN, detail: format!("error: {err}") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub all_passed: bool,
    pub checks: Vec<CheckResult>,
}

fn guard(name: &str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| CheckResult::failed(name, e))
}

/// Run the whole suite for `config`.
pub fn run_verify(config: &ExperimentConfig) -> VerifyReport {
    let v = &config.verify;
    let seed = config.seeds.first().copied().unwrap_or(0);
    let n = v.instances;
    let mut checks = vec![
        guard("optimal_values_vs_enumeration", check_optimal_values(n, seed)),
        guard("regression_oracles", check_regression(n, seed)),
        guard("divergence_monotonicity", check_divergence_monotonicity(n, seed)),
        guard("divergence_linear_vs_net", check_divergence_net(n, seed)),
        guard("bonus_exhaustive_properties", check_bonus_exhaustive(n, seed)),
        guard("binary_search_precision", check_binary_search(n, v.alpha, seed)),
        guard("bound_rhs_order_independence", check_rhs_order(seed)),
    ];
    checks.extend(frequency_checks(config));
    checks.push(guard("sweep_determinism", check_determinism(config)));
    let all_passed = checks.iter().all(|c| c.passed);
    VerifyReport { schema_version: SCHEMA_VERSION, all_passed, checks }
}

/// Random MDP with at most 4 states, 3 actions and horizon 3.
pub fn random_small_mdp<R: Rng + ?Sized>(rng: &mut R) -> Result<EpisodicMdp> {
    let (s, a, h) = (rng.gen_range(1..=4), rng.gen_range(1..=3), rng.gen_range(1..=3));
    crate::experiment::scenario::random_mdp(s, a, h, rng)
}

/// `max_pi V^pi_0(s)` per start state, over every deterministic policy.
pub fn brute_force_optimal_v0(mdp: &EpisodicMdp) -> Vec<f64> {
    let (sn, an, hn) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let digits = sn * hn;
    let mut choice = vec![0usize; digits];
    let mut best = vec![f64::NEG_INFINITY; sn];
    let mut v_next = vec![0.0; sn];
    let mut v = vec![0.0; sn];
    loop {
        v_next.iter_mut().for_each(|x| *x = 0.0);
        for h in (0..hn).rev() {
            for s in 0..sn {
                let a = choice[h * sn + s];
                v[s] = mdp.reward(h, s, a) + mdp.transition_row(h, s, a).iter().zip(&v_next).map(|(p, x)| p * x).sum::<f64>();
            }
            std::mem::swap(&mut v, &mut v_next);
        }
        for s in 0..sn {
            best[s] = best[s].max(v_next[s]);
        }
        let mut j = 0;
        while j < digits {
            choice[j] += 1;
            if choice[j] < an {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
        if j == digits {
            return best;
        }
    }
}

pub fn check_optimal_values(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x01);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let mdp = random_small_mdp(&mut rng)?;
        let opt = optimal_values(&mdp);
        for (x, y) in opt.values.v[0].iter().zip(brute_force_optimal_v0(&mdp)) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(CheckResult::at_most("optimal_values_vs_enumeration", worst, 1e-9, format!("{instances} random instances")))
}

/// Solve `m x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..n {
                m[r][c] -= f * m[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - tail) / m[r][r];
    }
    Some(x)
}

fn random_samples<R: Rng + ?Sized>(rng: &mut R, cells: usize, n: usize) -> Vec<Sample> {
    (0..n).map(|_| Sample { cell: rng.gen_range(0..cells), target: rng.gen_range(-0.5..1.5), sigma: rng.gen_range(1.0..3.0) }).collect()
}

/// Normal equations `(G + lambda I) theta = b` built sample by sample.
pub fn normal_equations(features: &[Vec<f64>], prob: &RegressionProblem) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = features[0].len();
    let mut g = vec![vec![0.0; d]; d];
    let mut b = vec![0.0; d];
    for s in &prob.samples {
        let phi = &features[s.cell];
        let w = 1.0 / (s.sigma * s.sigma);
        for i in 0..d {
            b[i] += w * phi[i] * s.target;
            for j in 0..d {
                g[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    for (i, row) in g.iter_mut().enumerate() {
        row[i] += prob.lambda;
    }
    (g, b)
}

/// Finite argmin vs a re-scan, linear residual vs Gaussian elimination, and
/// weight-scale invariance of both.
pub fn check_regression(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x02);
    let mut worst_gap: f64 = 0.0;
    let mut worst_residual: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..instances {
        // finite
        let (s, a) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let cells = s * a;
        let n = rng.gen_range(2..=200);
        let members: Vec<f64> = (0..n * cells).map(|_| (rng.gen_range(0..5) as f64) * 0.25).collect();
        let cls = FiniteFunctionClass::new(s, a, 1.0, members)?;
        let count = rng.gen_range(0..40);
        let prob = RegressionProblem::new(random_samples(&mut rng, cells, count), 0.0)?;
        let idx = weighted_least_squares_finite(&cls, &prob)?;
        let objectives: Vec<f64> = (0..cls.len()).map(|m| prob.objective(cls.member(m))).collect();
        let best = objectives.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * (1.0 + best.abs());
        let first = objectives.iter().position(|o| *o <= best + tol).unwrap_or(0);
        worst_gap = worst_gap.max(objectives[idx] - best);
        if idx != first {
            failures += 1;
        }
        let c = rng.gen_range(1.0..5.0);
        let scaled = RegressionProblem::new(prob.samples.iter().map(|x| Sample { sigma: x.sigma * c, ..*x }).collect(), 0.0)?;
        if weighted_least_squares_finite(&cls, &scaled)? != idx {
            failures += 1;
        }

        // linear
        let d = rng.gen_range(1..=4);
        let cells = d + rng.gen_range(0..4);
        let scale = 1.0 / (d as f64).sqrt();
        let features: Vec<Vec<f64>> = (0..cells).map(|_| (0..d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).collect();
        let lin = LinearFunctionClass::new(1, cells, features.clone(), 1e9, 1.0)?.unclamped();
        for lambda in [0.0, 1.0] {
            let count = rng.gen_range(3 * cells..60);
            let mut samples = random_samples(&mut rng, cells, count);
            // make sure every cell appears so lambda = 0 stays solvable
            samples.extend((0..cells).map(|cell| Sample { cell, target: rng.gen_range(0.0..1.0), sigma: 1.0 }));
            let prob = RegressionProblem::new(samples, lambda)?;
            let (g, b) = normal_equations(&features, &prob);
            let Some(reference) = gauss_solve(g.clone(), b.clone()) else { continue };
            let theta = match weighted_ridge_linear(&lin, &prob) {
                Ok(t) => t,
                Err(_) => {
                    failures += 1;
                    continue;
                }
            };
            let residual = (0..d).map(|i| ((0..d).map(|j| g[i][j] * theta[j]).sum::<f64>() - b[i]).abs()).fold(0.0, f64::max);
            let agree = theta.iter().zip(&reference).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            worst_residual = worst_residual.max(residual).max(agree);
            let c = rng.gen_range(1.0..5.0);
            let scaled = RegressionProblem::new(prob.samples.iter().map(|x| Sample { sigma: x.sigma * c, ..*x }).collect(), lambda / (c * c))?;
            let theta2 = weighted_ridge_linear(&lin, &scaled)?;
            if (theta2 - &theta).amax() > 1e-8 * (1.0 + theta.amax()) {
                failures += 1;
            }
        }
    }
    let passed = failures == 0 && worst_gap <= 1e-12 && worst_residual <= 1e-8;
    Ok(CheckResult {
        name: "regression_oracles".into(),
        passed,
        metric: worst_residual,
        threshold: 1e-8,
        detail: format!("{instances} instances; argmin/invariance failures {failures}; worst finite objective gap {worst_gap:e}"),
    })
}

fn random_finite<R: Rng + ?Sized>(rng: &mut R) -> Result<FiniteFunctionClass> {
    let (s, a) = (rng.gen_range(1..=3), rng.gen_range(1..=2));
    let n = rng.gen_range(1..=30);
    FiniteFunctionClass::new(s, a, 1.0, (0..n * s * a).map(|_| rng.gen_range(0.0..1.0)).collect())
}

/// Data, lambda and weight monotonicity of `D^2` on random triples, for
/// finite and linear classes.
pub fn check_divergence_monotonicity(triples: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x03);
    let mut violations = 0;
    for _ in 0..triples {
        let finite = random_finite(&mut rng)?;
        let cells = finite.num_cells();
        let d = rng.gen_range(1..=3);
        let scale = 1.0 / (d as f64).sqrt();
        let linear = LinearFunctionClass::new(1, cells, (0..cells).map(|_| (0..d).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).collect(), 1.0, 1.0)?;
        let weight: Vec<f64> = (0..cells).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..20.0) }).collect();
        let lambda = rng.gen_range(0.1..2.0);
        let more: Vec<f64> = weight.iter().map(|w| w + if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
        let less: Vec<f64> = weight.iter().map(|w| w * rng.gen_range(0.2..1.0)).collect();
        let bigger_lambda = lambda * rng.gen_range(1.1..3.0);
        for cls in [&finite as &dyn FunctionClass, &linear] {
            let base = cls.divergence_sq(&weight, lambda)?;
            let with_data = cls.divergence_sq(&more, lambda)?;
            let with_lambda = cls.divergence_sq(&weight, bigger_lambda)?;
            let with_sigma = cls.divergence_sq(&less, lambda)?;
            for c in 0..cells {
                let tol = 1e-12 * (1.0 + base[c]);
                if with_data[c] > base[c] + tol || with_sigma[c] < base[c] - tol {
                    violations += 1;
                }
                if base[c] > 1e-12 && with_lambda[c] >= base[c] {
                    violations += 1;
                }
            }
        }
    }
    Ok(CheckResult::at_most("divergence_monotonicity", violations as f64, 0.0, format!("{triples} triples x 3 properties x 2 class kinds")))
}

/// `d2_finite` on the `eps = 0.05` net of a random `d = 2` class against
/// `d2_linear`: within `[0.75 lin - 0.05, lin + 0.05]`.
pub fn check_divergence_net(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x04);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let cells = rng.gen_range(2..=6);
        let features: Vec<Vec<f64>> = (0..cells).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0) / 2f64.sqrt()).collect()).collect();
        // differences of members stay in the unit ball
        let lin = LinearFunctionClass::new(1, cells, features, 0.5, 1.0)?.unclamped();
        let net = linear_epsilon_net(&lin, 0.05, 1e6)?;
        let weight: Vec<f64> = (0..cells).map(|_| rng.gen_range(0.0..10.0)).collect();
        let exact = lin.divergence_sq(&weight, 1.0)?;
        let brute = net.class.divergence_sq(&weight, 1.0)?;
        for (x, y) in exact.iter().zip(&brute) {
            worst = worst.max(y - x - 0.05).max(0.75 * x - 0.05 - y);
        }
    }
    Ok(CheckResult::at_most("divergence_linear_vs_net", worst, 0.0, format!("{instances} instances; metric is the worst excursion outside the band")))
}

/// Exhaustive bonus vs an independent filter-and-max, property 1, monotonicity
/// in beta, and the grid closed form against enumeration.
pub fn check_bonus_exhaustive(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05);
    let mut failures = 0;
    for _ in 0..instances {
        let (s, a) = (rng.gen_range(1..=2), rng.gen_range(1..=2));
        let levels = rng.gen_range(2..=4);
        let range = rng.gen_range(0.5..3.0);
        let enumerated = build_grid_class(s, a, levels, range, 1e6)?;
        let grid = GridClass::new(s, a, levels, range)?;
        let cells = s * a;
        let center = enumerated.member(rng.gen_range(0..enumerated.len())).to_vec();
        let weight: Vec<f64> = (0..cells).map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.5..10.0) }).collect();
        let beta = rng.gen_range(0.0..2.0);
        let got = enumerated.bonus_exhaustive(&center, &weight, beta);
        let mut want = vec![0.0f64; cells];
        for m in 0..enumerated.len() {
            let f = enumerated.member(m);
            let dist: f64 = (0..cells).map(|c| weight[c] * (f[c] - center[c]).powi(2)).sum();
            if dist <= beta * beta {
                for c in 0..cells {
                    want[c] = want[c].max((f[c] - center[c]).abs());
                    if got[c] + 1e-12 < (f[c] - center[c]).abs() {
                        failures += 1;
                    }
                }
            }
        }
        let closed = grid.bonus(&center, &weight, beta, 1.0)?;
        let wider = enumerated.bonus_exhaustive(&center, &weight, beta * 1.5 + 0.1);
        for c in 0..cells {
            if (got[c] - want[c]).abs() > 1e-12 || (closed[c] - want[c]).abs() > 1e-9 || wider[c] + 1e-12 < got[c] {
                failures += 1;
            }
        }
    }
    Ok(CheckResult::at_most("bonus_exhaustive_properties", failures as f64, 0.0, format!("{instances} random grid instances")))
}

/// One random convex instance: unclamped `d = 1` linear class, center near
/// the origin, radius small enough that the feasible set stays inside the ball.
pub struct BinarySearchInstance {
    pub class: LinearFunctionClass,
    pub center: Vec<f64>,
    pub weight: Vec<f64>,
    pub beta: f64,
}

pub fn random_binary_search_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<BinarySearchInstance> {
    let cells = rng.gen_range(2..=6);
    let features: Vec<Vec<f64>> = (0..cells).map(|_| vec![rng.gen_range(0.2..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }]).collect();
    let class = LinearFunctionClass::new(1, cells, features, 1.0, 1.0)?.unclamped();
    let weight: Vec<f64> = (0..cells).map(|_| rng.gen_range(1.0..20.0)).collect();
    let gram: f64 = (0..cells).map(|c| weight[c] * class.feature(c)[0].powi(2)).sum();
    let beta = rng.gen_range(0.1..0.5) * gram.sqrt();
    let theta = DVector::from_element(1, rng.gen_range(-0.3..0.3));
    let center = class.evaluate(&theta);
    Ok(BinarySearchInstance { class, center, weight, beta })
}

/// `(max |search - exhaustive|, calls within bound)` over all cells of an
/// instance; the exhaustive side scans an `eps = 1e-5` net.
pub fn binary_search_error(inst: &BinarySearchInstance, alpha: f64) -> Result<(f64, bool)> {
    let net = linear_epsilon_net(&inst.class, 1e-5, 1e6)?;
    let exhaustive = net.class.bonus_exhaustive(&inst.center, &inst.weight, inst.beta);
    let mut worst: f64 = 0.0;
    let mut within = true;
    for (c, ex) in exhaustive.iter().enumerate() {
        let (out, _) = bonus_binary_search(&inst.class, &inst.weight, inst.beta, alpha, c)?;
        worst = worst.max((out.value - ex).abs());
        within &= out.oracle_calls <= out.call_bound();
    }
    Ok((worst, within))
}

pub fn check_binary_search(instances: usize, alpha: f64, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x06);
    let insts: Vec<BinarySearchInstance> = (0..instances).map(|_| random_binary_search_instance(&mut rng)).collect::<Result<_>>()?;
    let results = exec::map(Default::default(), &insts, |i| binary_search_error(i, alpha));
    let mut worst: f64 = 0.0;
    let mut calls_ok = true;
    for r in results {
        let (e, ok) = r?;
        worst = worst.max(e);
        calls_ok &= ok;
    }
    let mut res = CheckResult::at_most("binary_search_precision", worst, alpha, format!("{instances} convex linear instances; call bound held: {calls_ok}"));
    res.passed &= calls_ok;
    Ok(res)
}

/// The bound RHS summed in two orders on the two-state instance at K = 1000.
pub fn check_rhs_order(seed: u64) -> Result<CheckResult> {
    let mdp = two_state_instance()?;
    let mu = BehaviorSpec::Uniform.build(&mdp)?;
    let classes = stage_classes(&crate::class::ClassSpec::Grid { levels: 5 }, &mdp)?;
    let split = split_dataset(&rollout_dataset(&mdp, &mu, 2000, seed)?)?;
    let a = theorem_bound_rhs(&mdp, &classes, &split, 1.0, 1.0)?;
    let b = theorem_bound_rhs_reversed(&mdp, &classes, &split, 1.0, 1.0)?;
    Ok(CheckResult::at_most("bound_rhs_order_independence", (a - b).abs(), 1e-10, format!("rhs {a}")))
}

/// Cells at `verify.k` for `verify.runs` consecutive seeds.
pub fn verify_records(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let mdp = config.scenario.build()?;
    let behavior = config.behavior.build(&mdp)?;
    let classes = stage_classes(&config.class, &mdp)?;
    let planner = config.planner();
    let label = config.scenario.label();
    let setup = CellSetup { scenario: &label, mdp: &mdp, behavior: &behavior, classes: &classes, config: &planner };
    let base = config.seeds.first().copied().unwrap_or(0);
    let seeds: Vec<u64> = (0..config.verify.runs as u64).map(|i| base + i).collect();
    exec::map(config.execution, &seeds, |&s| run_cell(&setup, config.verify.k, s).map(|o| o.record)).into_iter().collect()
}

fn frequency_checks(config: &ExperimentConfig) -> Vec<CheckResult> {
    let names = ["pessimism_frequency", "sandwich_frequency", "regret_decomposition"];
    let records = match verify_records(config) {
        Ok(r) => r,
        Err(e) => return names.iter().map(|n| CheckResult::failed(n, &e)).collect(),
    };
    let runs = records.len() as f64;
    let min = config.verify.min_fraction;
    let k = config.verify.k;
    let pess = records.iter().filter(|r| r.pess_viol == 0).count() as f64 / runs;
    let sand = records.iter().filter(|r| r.sandwich_viol == 0).count() as f64 / runs;
    let premise = records.iter().filter(|r| r.decomposition.premise).count();
    let broken = records.iter().filter(|r| r.decomposition.premise && !r.decomposition.holds()).count();
    vec![
        CheckResult::at_least(names[0], pess, min, format!("fraction of {runs} runs at K={k} with f_hat <= Q* everywhere")),
        CheckResult::at_least(names[1], sand, min, format!("fraction of {runs} runs at K={k} with sigma_hat^2 inside the sandwich")),
        CheckResult::at_most(names[2], broken as f64, 0.0, format!("violations among {premise} runs whose premise held")),
    ]
}

/// A small sweep run twice must hash identically.
pub fn check_determinism(config: &ExperimentConfig) -> Result<CheckResult> {
    let k = *config.k_values.iter().min().expect("validated");
    let small = ExperimentConfig { k_values: vec![k], seeds: config.seeds.iter().copied().take(3).collect(), bound_fit_k: None, ..config.clone() };
    let a = run_sweep(&small)?.summary.determinism_hash;
    let b = run_sweep(&small)?.summary.determinism_hash;
    Ok(CheckResult { name: "sweep_determinism".into(), passed: a == b, metric: f64::from(u8::from(a != b)), threshold: 0.0, detail: a })
}
