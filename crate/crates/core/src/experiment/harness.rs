//! One experiment cell: data, measured diagnostics, planner, exact evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::class::{ClassSpec, FunctionClass};
use crate::data::{rollout_dataset, split_dataset, SplitDataset};
use crate::error::Result;
use crate::mdp::{occupancy_from, occupancy_measure, optimal_values, policy_value, EpisodicMdp, OptimalSolution, Policy};
use crate::pnlsvi::{run_pnlsvi, PnlsviConfig, PnlsviOutput, StageClasses};
use crate::table::StateActionTable;

pub const VALUE_TOL: f64 = 1e-9;

/// Floor for the measured coverage constant so radii stay finite.
const KAPPA_FLOOR: f64 = 1e-6;

/// `E_{s ~ init}[V*_0(s) - V^pi_0(s)]`, computed exactly.
pub fn suboptimality_gap(mdp: &EpisodicMdp, pi_hat: &Policy) -> Result<f64> {
    crate::mdp::suboptimality_gap(mdp, pi_hat)
}

/// `max_h` completeness gap of `F_h` at `T_h V*_{h+1}`, and the same for the
/// second-moment classes at `T_{2,h} V*_{h+1}`.
pub fn measured_epsilon(mdp: &EpisodicMdp, classes: &StageClasses, opt: &OptimalSolution) -> Result<(f64, f64)> {
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for h in 0..mdp.horizon() {
        let v = &opt.values.v[h + 1];
        first = first.max(classes.first[h].completeness_gap(mdp.bellman_apply(h, v)?.values())?);
        second = second.max(classes.second[h].completeness_gap(mdp.bellman_second_moment(h, v)?.values())?);
    }
    Ok((first, second))
}

/// `min_h` coverage constant of `F_h` under the behavior occupancy.
pub fn measured_kappa(mdp: &EpisodicMdp, classes: &StageClasses, mu: &Policy) -> Result<f64> {
    let occ = occupancy_measure(mdp, mu)?;
    let mut kappa = f64::INFINITY;
    for h in 0..mdp.horizon() {
        kappa = kappa.min(classes.first[h].coverage(occ.stage(h).values())?);
    }
    Ok(kappa)
}

/// Per-cell design weights `n_c / w_c` of a stage for a weight table `w`.
fn design(split: &SplitDataset, h: usize, variance: &StateActionTable) -> Vec<f64> {
    let mut weight = vec![0.0; variance.num_cells()];
    let an = variance.num_actions();
    for rec in split.planning.stage(h) {
        let c = rec.state * an + rec.action;
        weight[c] += 1.0 / variance.cell(c);
    }
    weight
}

/// `sqrt(ln N) sum_h sum_{s,a} d^{pi*}_h(s,a) D(z; D_h; sigma^2 = V_h V*_{h+1})`
/// on the planning half (multiply by the fitted constant separately).
pub fn theorem_bound_rhs(mdp: &EpisodicMdp, classes: &StageClasses, split: &SplitDataset, lambda: f64, multiplier: f64) -> Result<f64> {
    let opt = optimal_values(mdp);
    let occ = occupancy_measure(mdp, &opt.policy)?;
    let mut total = 0.0;
    for h in 0..mdp.horizon() {
        let tv = mdp.truncated_variance(h, &opt.values.v[h + 1])?;
        let d2 = classes.first[h].divergence_sq(&design(split, h, &tv), lambda)?;
        total += occ.stage(h).values().iter().zip(&d2).map(|(d, x)| d * x.sqrt()).sum::<f64>();
    }
    Ok(multiplier * classes.log_cardinality().sqrt() * total)
}

/// Same quantity, summing cells in reverse order.
pub fn theorem_bound_rhs_reversed(mdp: &EpisodicMdp, classes: &StageClasses, split: &SplitDataset, lambda: f64, multiplier: f64) -> Result<f64> {
    let opt = optimal_values(mdp);
    let occ = occupancy_measure(mdp, &opt.policy)?;
    let mut total = 0.0;
    for h in (0..mdp.horizon()).rev() {
        let tv = mdp.truncated_variance(h, &opt.values.v[h + 1])?;
        let d2 = classes.first[h].divergence_sq(&design(split, h, &tv), lambda)?;
        for c in (0..d2.len()).rev() {
            total += occ.stage(h).cell(c) * d2[c].sqrt();
        }
    }
    Ok(multiplier * classes.log_cardinality().sqrt() * total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionCheck {
    /// `|T_h f_hat_{h+1} - f_tilde_h| <= b_h` at every stage and cell
    pub premise: bool,
    /// `max_s (V*_0(s) - V^pi_0(s)) - (2 sum_h E_{pi*,s}[b_h] + 2 eps H)`; `<= 0` when the bound holds
    pub worst_slack: f64,
    /// the same with states drawn from the initial distribution
    pub expected_slack: f64,
}

impl DecompositionCheck {
    pub fn holds(&self) -> bool {
        self.worst_slack <= VALUE_TOL && self.expected_slack <= VALUE_TOL
    }
}

/// Checks the premise exactly and evaluates the decomposition bound from
/// every start state.
pub fn regret_decomposition(mdp: &EpisodicMdp, out: &PnlsviOutput, epsilon: f64) -> Result<DecompositionCheck> {
    let (sn, hn) = (mdp.num_states(), mdp.horizon());
    let opt = optimal_values(mdp);
    let mut premise = true;
    for h in 0..hn {
        let v_next = if h + 1 < hn { out.stages[h + 1].f_hat.max_over_actions() } else { vec![0.0; sn] };
        let backup = mdp.bellman_apply(h, &v_next)?;
        let st = &out.stages[h];
        for c in 0..backup.num_cells() {
            if (backup.cell(c) - st.f_tilde.cell(c)).abs() > st.bonus.cell(c) + VALUE_TOL {
                premise = false;
            }
        }
    }
    let val = policy_value(mdp, &out.policy)?;
    let mut worst = f64::NEG_INFINITY;
    let mut expected = 0.0;
    for s in 0..sn {
        let mut start = vec![0.0; sn];
        start[s] = 1.0;
        let occ = occupancy_from(mdp, &opt.policy, &start)?;
        let bonus_sum: f64 = (0..hn).map(|h| occ.expectation(h, &out.stages[h].bonus)).sum();
        let slack = opt.values.v[0][s] - val.v[0][s] - (2.0 * bonus_sum + 2.0 * epsilon * hn as f64);
        worst = worst.max(slack);
        expected += mdp.initial_distribution()[s] * slack;
    }
    Ok(DecompositionCheck { premise, worst_slack: worst, expected_slack: expected })
}

/// Cells where `f_hat_h > Q*_h + tol`.
pub fn pessimism_violations(out: &PnlsviOutput, opt: &OptimalSolution) -> usize {
    out.stages
        .iter()
        .zip(&opt.values.q)
        .map(|(st, q)| st.f_hat.values().iter().zip(q.values()).filter(|(f, q)| **f > **q + VALUE_TOL).count())
        .sum()
}

/// Cells where `sigma_hat^2` leaves `[1, max{1, Var_h V*_{h+1}}]`.
pub fn sandwich_violations(mdp: &EpisodicMdp, out: &PnlsviOutput, opt: &OptimalSolution) -> Result<usize> {
    let mut count = 0;
    for h in 0..mdp.horizon() {
        let tv = mdp.truncated_variance(h, &opt.values.v[h + 1])?;
        for (s2, t) in out.variance.stages[h].sigma_sq.values().iter().zip(tv.values()) {
            if *s2 < 1.0 - VALUE_TOL || *s2 > t + VALUE_TOL {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Everything measured in one (K, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub gap: f64,
    pub bound_rhs: f64,
    pub pess_viol: usize,
    pub sandwich_viol: usize,
    pub eps: f64,
    pub kappa: f64,
    pub ms: f64,
    pub decomposition: DecompositionCheck,
    pub eps_second_moment: f64,
}

/// Inputs of a cell beyond (K, seed).
#[derive(Debug, Clone)]
pub struct CellSetup<'a> {
    pub scenario: &'a str,
    pub mdp: &'a EpisodicMdp,
    pub behavior: &'a Policy,
    pub classes: &'a StageClasses,
    pub config: &'a PnlsviConfig,
}

/// Full output of a cell, for callers that need more than the record.
pub struct CellOutcome {
    pub record: RunRecord,
    pub output: PnlsviOutput,
    pub split: SplitDataset,
}

/// Roll out `2K` episodes with `seed`, measure `eps` and `kappa`, plan, evaluate.
pub fn run_cell(setup: &CellSetup<'_>, k: usize, seed: u64) -> Result<CellOutcome> {
    let started = Instant::now();
    let mdp = setup.mdp;
    let opt = optimal_values(mdp);
    let data = rollout_dataset(mdp, setup.behavior, 2 * k, seed)?;
    let split = split_dataset(&data)?;
    let (eps, eps2) = measured_epsilon(mdp, setup.classes, &opt)?;
    let kappa = measured_kappa(mdp, setup.classes, setup.behavior)?;
    let mut config = setup.config.clone();
    config.epsilon = eps;
    config.kappa = if kappa.is_finite() { kappa.max(KAPPA_FLOOR) } else { 1.0 };
    let output = run_pnlsvi(&split, setup.classes, &config)?;
    let gap = suboptimality_gap(mdp, &output.policy)?;
    let bound_rhs = theorem_bound_rhs(mdp, setup.classes, &split, config.lambda, 1.0)?;
    let record = RunRecord {
        scenario: setup.scenario.to_string(),
        k,
        seed,
        gap,
        bound_rhs,
        pess_viol: pessimism_violations(&output, &opt),
        sandwich_viol: sandwich_violations(mdp, &output, &opt)?,
        eps,
        kappa,
        ms: started.elapsed().as_secs_f64() * 1e3,
        decomposition: regret_decomposition(mdp, &output, eps)?,
        eps_second_moment: eps2,
    };
    Ok(CellOutcome { record, output, split })
}

/// Build the stage classes for a scenario.
pub fn stage_classes(spec: &ClassSpec, mdp: &EpisodicMdp) -> Result<StageClasses> {
    StageClasses::build(spec, mdp.num_states(), mdp.num_actions(), mdp.horizon())
}

/// Coverage constant of an arbitrary class under an occupancy stage.
pub fn coverage_constant(cls: &dyn FunctionClass, occupancy: &StateActionTable) -> Result<f64> {
    cls.coverage(occupancy.values())
}
