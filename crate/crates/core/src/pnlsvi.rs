//! The two-phase planner: variance estimation on the held-out half, then
//! variance-weighted pessimistic value iteration on the planning half.
//!
//! Nothing in here sees an MDP: inputs are a [`SplitDataset`], per-stage
//! classes and a [`PnlsviConfig`].

use serde::{Deserialize, Serialize};

use crate::bonus::{compute_bonus, BonusMethod, BonusProvenance};
use crate::class::{ClassSpec, FunctionClass};
use crate::data::{OfflineDataset, SplitDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mdp::Policy;
use crate::table::{argmax_lowest, truncate, CellStats, StateActionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusProfile {
    /// Radii exactly as the closed-form expressions give them.
    #[default]
    Paper,
    /// Every radius scaled by `practical_scale`.
    Practical,
}

/// Per-radius override multipliers, applied on top of the profile scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadiusMultipliers {
    pub beta_bar_1: f64,
    pub beta_bar_2: f64,
    pub beta: f64,
    pub variance_offset: f64,
}

impl Default for RadiusMultipliers {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl RadiusMultipliers {
    pub fn uniform(m: f64) -> Self {
        Self { beta_bar_1: m, beta_bar_2: m, beta: m, variance_offset: m }
    }
}

/// Planner settings. `epsilon` and `kappa` are measured by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnlsviConfig {
    pub delta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub c_var: f64,
    pub profile: RadiusProfile,
    pub practical_scale: f64,
    pub multipliers: RadiusMultipliers,
    pub bonus: BonusMethod,
    /// `false` replaces the variance weights with `sigma = 1`.
    pub variance_weights: bool,
    pub execution: Execution,
}

impl Default for PnlsviConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            lambda: 1.0,
            epsilon: 0.0,
            kappa: 1.0,
            c_var: 1.0,
            profile: RadiusProfile::Paper,
            practical_scale: 0.1,
            multipliers: RadiusMultipliers::default(),
            bonus: BonusMethod::Native,
            variance_weights: true,
            execution: Execution::default(),
        }
    }
}

/// Sizes entering the confidence radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusInputs {
    pub delta: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub kappa: f64,
    pub c_var: f64,
    pub horizon: usize,
    pub episodes: usize,
    /// range bound `L`
    pub range: f64,
    /// `T` in the variance-aware radii
    pub rounds: f64,
    pub log_n: f64,
    pub log_nb: f64,
}

/// `ln(N (N - 1) / 2)` computed from `ln N`, floored at `ln 2`.
pub fn log_pair_count(log_n: f64) -> f64 {
    let raw = if log_n > 30.0 {
        2.0 * log_n - std::f64::consts::LN_2
    } else {
        let n = log_n.exp();
        (n * (n - 1.0) / 2.0).max(0.0).ln()
    };
    raw.max(std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub inputs: RadiusInputs,
    pub i: f64,
    pub i_prime: f64,
    pub v: f64,
    pub iota: f64,
    /// unscaled closed forms
    pub raw_beta_bar_1: f64,
    pub raw_beta_bar_2: f64,
    pub raw_beta: f64,
    pub raw_variance_offset: f64,
    /// after profile and multipliers
    pub beta_bar_1: f64,
    pub beta_bar_2: f64,
    pub beta: f64,
    pub variance_offset: f64,
}

pub fn compute_confidence_params(inputs: RadiusInputs, profile: RadiusProfile, practical_scale: f64, mult: RadiusMultipliers) -> Result<ConfidenceParams> {
    let RadiusInputs { delta, lambda, epsilon, kappa, c_var, horizon, episodes, range, rounds, log_n, log_nb } = inputs;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
    }
    if !(lambda > 0.0) || !(epsilon >= 0.0) || !(kappa > 0.0) || horizon == 0 || episodes == 0 || !(range > 0.0) {
        return Err(Error::InvalidParameter("radius inputs must be positive (epsilon non-negative)".into()));
    }
    let h = horizon as f64;
    let k = episodes as f64;
    let l = range;
    let ln_delta = delta.ln();
    let log_nn = log_n + log_nb;
    let i = (2.0 * (log_nn + h.ln() + (2.0 * (4.0 * k).ln() + 2.0).ln() + ((2.0 * l).ln() + 2.0).ln() - ln_delta)).sqrt();
    let i_prime = (4.0 * (log_nn + h.ln() + (2.0 * (4.0 * l * k).ln() + 2.0).ln() + ((4.0 * l).ln() + 2.0).ln() - ln_delta)).sqrt();
    let tail = (2.0 * (18.0 * l * rounds).ln() + 2.0).ln() + ((18.0 * l).ln() + 2.0).ln();
    let v = (2.0 * (h.ln() + log_n + tail - ln_delta)).sqrt();
    let iota = (3.0 * (h.ln() + log_nn + tail - ln_delta)).sqrt();

    let raw_beta_bar_1 = (2.0 * (24.0 * h * h + 5.0) * i * i + 16.0 * k * h * epsilon).sqrt();
    let raw_beta_bar_2 = ((40.0 * h.powi(4) + 10.0) * i_prime * i_prime + 16.0 * k * l * epsilon).sqrt();
    let raw_beta = (2.0
        * (4.0 / 3.0 * v * lambda.sqrt() + std::f64::consts::SQRT_2 * v + 30.0 * v * v + 2.0 / 3.0 * iota * iota / log_nb + 8.0 * k * l * epsilon))
        .sqrt();
    let raw_variance_offset = c_var * log_nn.sqrt() * h.powi(3) / (k * kappa).sqrt();

    let scale = match profile {
        RadiusProfile::Paper => 1.0,
        RadiusProfile::Practical => practical_scale,
    };
    Ok(ConfidenceParams {
        inputs,
        i,
        i_prime,
        v,
        iota,
        raw_beta_bar_1,
        raw_beta_bar_2,
        raw_beta,
        raw_variance_offset,
        beta_bar_1: raw_beta_bar_1 * scale * mult.beta_bar_1,
        beta_bar_2: raw_beta_bar_2 * scale * mult.beta_bar_2,
        beta: raw_beta * scale * mult.beta,
        variance_offset: raw_variance_offset * scale * mult.variance_offset,
    })
}

/// First-moment classes `F_h` (range `H - h`) and second-moment classes
/// (range `(H - h)^2`) for every stage.
#[derive(Debug)]
pub struct StageClasses {
    pub first: Vec<Box<dyn FunctionClass>>,
    pub second: Vec<Box<dyn FunctionClass>>,
}

impl StageClasses {
    pub fn build(spec: &ClassSpec, num_states: usize, num_actions: usize, horizon: usize) -> Result<Self> {
        let mut first = Vec::with_capacity(horizon);
        let mut second = Vec::with_capacity(horizon);
        for h in 0..horizon {
            let l = (horizon - h) as f64;
            first.push(spec.build(num_states, num_actions, l)?);
            second.push(spec.build(num_states, num_actions, l * l)?);
        }
        Ok(Self { first, second })
    }

    pub fn horizon(&self) -> usize {
        self.first.len()
    }

    /// `max_h ln |F_h|`.
    pub fn log_cardinality(&self) -> f64 {
        self.first.iter().map(|c| c.log_cardinality()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceStage {
    pub f_bar: StateActionTable,
    pub g_bar: StateActionTable,
    pub bonus: StateActionTable,
    pub f_check: StateActionTable,
    pub sigma_sq: StateActionTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePhaseOutput {
    pub stages: Vec<VarianceStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningStage {
    pub f_tilde: StateActionTable,
    pub bonus: StateActionTable,
    pub f_hat: StateActionTable,
    /// design weights `sum 1/sigma^2` per cell
    pub design: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlsviOutput {
    pub params: ConfidenceParams,
    pub variance: VariancePhaseOutput,
    pub stages: Vec<PlanningStage>,
    pub policy: Policy,
    pub bonus_provenance: BonusProvenance,
    pub heuristic_bonus: bool,
}

impl PnlsviOutput {
    /// `f_hat_h` for `h < H` and zeros at `h = H`.
    pub fn f_hat(&self, h: usize) -> Option<&StateActionTable> {
        self.stages.get(h).map(|s| &s.f_hat)
    }
}

fn stage_stats(data: &OfflineDataset, h: usize, num_actions: usize, cells: usize, target: impl Fn(f64, usize) -> f64, sigma: impl Fn(usize) -> f64) -> CellStats {
    let mut st = CellStats::empty(cells);
    for rec in data.stage(h) {
        let c = rec.state * num_actions + rec.action;
        let y = target(rec.reward, rec.next_state);
        let s = sigma(c);
        let w = 1.0 / (s * s);
        st.weight[c] += w;
        st.moment[c] += w * y;
        st.square[c] += w * y * y;
    }
    st
}

fn check_inputs(data: &OfflineDataset, classes: &StageClasses) -> Result<()> {
    if classes.horizon() != data.horizon || classes.second.len() != data.horizon {
        return Err(Error::DimensionMismatch { expected: data.horizon, got: classes.horizon() });
    }
    for c in classes.first.iter().chain(&classes.second) {
        if c.num_states() != data.num_states || c.num_actions() != data.num_actions {
            return Err(Error::InvalidClass("class shape does not match the dataset".into()));
        }
    }
    Ok(())
}

/// Variance-estimation phase on the held-out half.
pub fn variance_estimation_phase(dbar: &OfflineDataset, classes: &StageClasses, params: &ConfidenceParams, config: &PnlsviConfig) -> Result<VariancePhaseOutput> {
    check_inputs(dbar, classes)?;
    let (sn, an, hn) = (dbar.num_states, dbar.num_actions, dbar.horizon);
    let cells = sn * an;
    let cap = (hn * hn) as f64;
    let mut stages: Vec<Option<VarianceStage>> = vec![None; hn];
    let mut v_next = vec![0.0; sn];
    for h in (0..hn).rev() {
        let l = (hn - h) as f64;
        let first = stage_stats(dbar, h, an, cells, |r, s2| r + v_next[s2], |_| 1.0);
        let second = stage_stats(dbar, h, an, cells, |r, s2| (r + v_next[s2]).powi(2), |_| 1.0);
        let f_bar = classes.first[h].fit(&first)?;
        let g_bar = classes.second[h].fit(&second)?;
        let b = compute_bonus(classes.first[h].as_ref(), config.bonus, &f_bar, &first.weight, params.beta_bar_1, config.lambda, config.execution)?;
        let f_check: Vec<f64> = f_bar.iter().zip(&b.values).map(|(f, b)| truncate(f - b - config.epsilon, 0.0, l)).collect();
        let sigma_sq: Vec<f64> =
            f_bar.iter().zip(&g_bar).map(|(f, g)| (g - f * f - params.variance_offset).max(1.0).min(cap)).collect();
        let f_check = StateActionTable::from_values(sn, an, f_check)?;
        v_next = f_check.max_over_actions();
        stages[h] = Some(VarianceStage {
            f_bar: StateActionTable::from_values(sn, an, f_bar)?,
            g_bar: StateActionTable::from_values(sn, an, g_bar)?,
            bonus: StateActionTable::from_values(sn, an, b.values)?,
            f_check,
            sigma_sq: StateActionTable::from_values(sn, an, sigma_sq)?,
        });
    }
    Ok(VariancePhaseOutput { stages: stages.into_iter().map(|s| s.expect("every stage visited")).collect() })
}

/// Pessimistic planning phase on the planning half.
pub fn pessimistic_planning_phase(
    d: &OfflineDataset,
    sigma_sq: &[StateActionTable],
    classes: &StageClasses,
    params: &ConfidenceParams,
    config: &PnlsviConfig,
) -> Result<(Vec<PlanningStage>, Policy, BonusProvenance, bool)> {
    check_inputs(d, classes)?;
    let (sn, an, hn) = (d.num_states, d.num_actions, d.horizon);
    if sigma_sq.len() != hn {
        return Err(Error::DimensionMismatch { expected: hn, got: sigma_sq.len() });
    }
    let cells = sn * an;
    let mut stages: Vec<Option<PlanningStage>> = vec![None; hn];
    let mut actions = vec![vec![0usize; sn]; hn];
    let mut v_next = vec![0.0; sn];
    let mut provenance = BonusProvenance::ClosedForm;
    let mut heuristic = false;
    for h in (0..hn).rev() {
        let l = (hn - h) as f64;
        let sig = &sigma_sq[h];
        let stats = stage_stats(d, h, an, cells, |r, s2| r + v_next[s2], |c| if config.variance_weights { sig.cell(c).sqrt() } else { 1.0 });
        let cls = classes.first[h].as_ref();
        let f_tilde = cls.fit(&stats)?;
        let b = compute_bonus(cls, config.bonus, &f_tilde, &stats.weight, params.beta, config.lambda, config.execution)?;
        provenance = b.provenance;
        heuristic |= b.heuristic;
        let f_hat: Vec<f64> = f_tilde.iter().zip(&b.values).map(|(f, b)| truncate(f - b - config.epsilon, 0.0, l)).collect();
        let f_hat = StateActionTable::from_values(sn, an, f_hat)?;
        for (s, a) in actions[h].iter_mut().enumerate() {
            *a = argmax_lowest(f_hat.row(s));
        }
        v_next = f_hat.max_over_actions();
        stages[h] = Some(PlanningStage {
            f_tilde: StateActionTable::from_values(sn, an, f_tilde)?,
            bonus: StateActionTable::from_values(sn, an, b.values)?,
            f_hat,
            design: stats.weight,
        });
    }
    let policy = Policy::deterministic(an, &actions)?;
    Ok((stages.into_iter().map(|s| s.expect("every stage visited")).collect(), policy, provenance, heuristic))
}

/// Radius inputs for a split dataset and class family.
pub fn radius_inputs(split: &SplitDataset, classes: &StageClasses, config: &PnlsviConfig) -> RadiusInputs {
    let h = split.planning.horizon;
    let k = split.episodes_per_half().max(1);
    let log_n = classes.log_cardinality().max(std::f64::consts::LN_2);
    RadiusInputs {
        delta: config.delta,
        lambda: config.lambda,
        epsilon: config.epsilon,
        kappa: config.kappa,
        c_var: config.c_var,
        horizon: h,
        episodes: k,
        range: h as f64,
        rounds: k as f64,
        log_n,
        log_nb: log_pair_count(log_n),
    }
}

/// Full planner: radii, variance phase on the held-out half, planning on the other.
pub fn run_pnlsvi(split: &SplitDataset, classes: &StageClasses, config: &PnlsviConfig) -> Result<PnlsviOutput> {
    if split.planning.num_episodes() != split.variance.num_episodes() {
        return Err(Error::InvalidDataset("halves differ in size".into()));
    }
    let params = compute_confidence_params(radius_inputs(split, classes, config), config.profile, config.practical_scale, config.multipliers)?;
    let variance = variance_estimation_phase(&split.variance, classes, &params, config)?;
    let sigma_sq: Vec<StateActionTable> = variance.stages.iter().map(|s| s.sigma_sq.clone()).collect();
    let (stages, policy, bonus_provenance, heuristic_bonus) = pessimistic_planning_phase(&split.planning, &sigma_sq, classes, &params, config)?;
    Ok(PnlsviOutput { params, variance, stages, policy, bonus_provenance, heuristic_bonus })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> RadiusInputs {
        RadiusInputs {
            delta: 0.1,
            lambda: 1.0,
            epsilon: 0.0,
            kappa: 0.5,
            c_var: 1.0,
            horizon: 2,
            episodes: 100,
            range: 4.0,
            rounds: 100.0,
            log_n: 10f64.ln(),
            log_nb: 10f64.ln(),
        }
    }

    #[test]
    fn i_matches_direct_evaluation() {
        let p = compute_confidence_params(inputs(), RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).unwrap();
        // direct: sqrt(2 ln(N Nb H (2 ln(4K) + 2)(ln(2L) + 2) / delta))
        let arg = 10.0 * 10.0 * 2.0 * (2.0 * 400f64.ln() + 2.0) * (8f64.ln() + 2.0) / 0.1;
        assert!((p.i - (2.0 * arg.ln()).sqrt()).abs() < 1e-12);
        let arg = 10.0 * 10.0 * 2.0 * (2.0 * 1600f64.ln() + 2.0) * (16f64.ln() + 2.0) / 0.1;
        assert!((p.i_prime - (4.0 * arg.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_epsilon_drops_the_episode_term() {
        let p = compute_confidence_params(inputs(), RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).unwrap();
        assert!((p.beta_bar_1.powi(2) - 2.0 * (24.0 * 4.0 + 5.0) * p.i * p.i).abs() < 1e-9);
        let mut with_eps = inputs();
        with_eps.epsilon = 0.01;
        let q = compute_confidence_params(with_eps, RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).unwrap();
        assert!((q.beta_bar_1.powi(2) - p.beta_bar_1.powi(2) - 16.0 * 100.0 * 2.0 * 0.01).abs() < 1e-9);
    }

    #[test]
    fn smaller_delta_larger_radii() {
        let p = compute_confidence_params(inputs(), RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).unwrap();
        let mut half = inputs();
        half.delta = 0.05;
        let q = compute_confidence_params(half, RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).unwrap();
        for (a, b) in [(p.i, q.i), (p.i_prime, q.i_prime), (p.v, q.v), (p.iota, q.iota), (p.beta_bar_1, q.beta_bar_1), (p.beta_bar_2, q.beta_bar_2), (p.beta, q.beta)] {
            assert!(b > a);
        }
    }

    #[test]
    fn profile_and_multipliers_scale() {
        let p = compute_confidence_params(inputs(), RadiusProfile::Practical, 0.1, RadiusMultipliers::default()).unwrap();
        assert!((p.beta - 0.1 * p.raw_beta).abs() < 1e-12);
        let z = compute_confidence_params(inputs(), RadiusProfile::Paper, 0.1, RadiusMultipliers::uniform(0.0)).unwrap();
        assert_eq!((z.beta, z.beta_bar_1, z.variance_offset), (0.0, 0.0, 0.0));
    }

    #[test]
    fn invalid_delta_rejected() {
        let mut bad = inputs();
        bad.delta = 1.0;
        assert!(compute_confidence_params(bad, RadiusProfile::Paper, 0.1, RadiusMultipliers::default()).is_err());
    }

    #[test]
    fn pair_count_logs() {
        assert!((log_pair_count(10f64.ln()) - 45f64.ln()).abs() < 1e-12);
        assert_eq!(log_pair_count(0.0), std::f64::consts::LN_2);
        assert!((log_pair_count(100.0) - (200.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }
}
