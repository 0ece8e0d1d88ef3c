//! Exact tabular episodic-MDP engine.
//!
//! Stages are 0-based throughout the crate: stage `h` runs over `0..H` and
//! value functions are indexed `0..=H` with `V_H = 0`. The clipping range
//! of stage `h` is therefore `H - h`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{argmax_lowest, StateActionTable};

const MASS_TOL: f64 = 1e-12;

/// Serializable form of an [`EpisodicMdp`] with nested per-stage tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// `rewards[h][s][a]`
    pub rewards: Vec<Vec<Vec<f64>>>,
    /// `transitions[h][s][a][s']`
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    pub initial_distribution: Vec<f64>,
}

/// Finite-horizon MDP with deterministic rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct EpisodicMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    initial: Vec<f64>,
}

impl EpisodicMdp {
    /// Build from flat buffers: `rewards[(h*S + s)*A + a]`,
    /// `transitions[((h*S + s)*A + a)*S + s']`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidMdp("states, actions and horizon must be positive".into()));
        }
        let cells = horizon * num_states * num_actions;
        if rewards.len() != cells {
            return Err(Error::DimensionMismatch { expected: cells, got: rewards.len() });
        }
        if transitions.len() != cells * num_states {
            return Err(Error::DimensionMismatch { expected: cells * num_states, got: transitions.len() });
        }
        if initial.len() != num_states {
            return Err(Error::DimensionMismatch { expected: num_states, got: initial.len() });
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidMdp(format!("reward {r} outside [0, 1]")));
        }
        check_distribution(&initial).map_err(|m| Error::InvalidMdp(format!("initial distribution: {m}")))?;
        for (row_idx, row) in transitions.chunks(num_states).enumerate() {
            check_distribution(row).map_err(|m| Error::InvalidMdp(format!("transition row {row_idx}: {m}")))?;
        }
        Ok(Self { num_states, num_actions, horizon, rewards, transitions, initial })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[(h * self.num_states + s) * self.num_actions + a]
    }

    /// `P_h(. | s, a)`.
    #[inline]
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = ((h * self.num_states + s) * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn reward_table(&self, h: usize) -> StateActionTable {
        StateActionTable::from_fn(self.num_states, self.num_actions, |s, a| self.reward(h, s, a))
    }

    fn check_stage(&self, h: usize, v: &[f64]) -> Result<()> {
        if h >= self.horizon {
            return Err(Error::StageOutOfRange { stage: h, horizon: self.horizon });
        }
        if v.len() != self.num_states {
            return Err(Error::DimensionMismatch { expected: self.num_states, got: v.len() });
        }
        Ok(())
    }

    fn expectation(&self, h: usize, s: usize, a: usize, g: impl Fn(usize) -> f64) -> f64 {
        self.transition_row(h, s, a).iter().enumerate().map(|(s2, p)| p * g(s2)).sum()
    }

    /// `[T_h V](s,a) = r_h(s,a) + sum_s' P_h(s'|s,a) V(s')`, with `V` the stage-`h+1` values.
    pub fn bellman_apply(&self, h: usize, v: &[f64]) -> Result<StateActionTable> {
        self.check_stage(h, v)?;
        Ok(StateActionTable::from_fn(self.num_states, self.num_actions, |s, a| {
            self.reward(h, s, a) + self.expectation(h, s, a, |s2| v[s2])
        }))
    }

    /// `[T_{2,h} V](s,a) = sum_s' P_h(s'|s,a) (r_h(s,a) + V(s'))^2`.
    pub fn bellman_second_moment(&self, h: usize, v: &[f64]) -> Result<StateActionTable> {
        self.check_stage(h, v)?;
        Ok(StateActionTable::from_fn(self.num_states, self.num_actions, |s, a| {
            let r = self.reward(h, s, a);
            self.expectation(h, s, a, |s2| (r + v[s2]).powi(2))
        }))
    }

    /// `[Var_h V](s,a) = [P_h V^2](s,a) - ([P_h V](s,a))^2`, clamped at zero
    /// after checking round-off stays above `-1e-12`.
    pub fn conditional_variance(&self, h: usize, v: &[f64]) -> Result<StateActionTable> {
        self.check_stage(h, v)?;
        let mut out = StateActionTable::zeros(self.num_states, self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                // centred form, so round-off stays tiny
                let mean = self.expectation(h, s, a, |s2| v[s2]);
                let var = self.expectation(h, s, a, |s2| (v[s2] - mean).powi(2));
                if var < -MASS_TOL {
                    return Err(Error::NegativeVariance { cell: s * self.num_actions + a, value: var });
                }
                out.set(s, a, var.max(0.0));
            }
        }
        Ok(out)
    }

    /// `max{1, [Var_h V]}`.
    pub fn truncated_variance(&self, h: usize, v: &[f64]) -> Result<StateActionTable> {
        Ok(self.conditional_variance(h, v)?.map(|x| x.max(1.0)))
    }

    pub fn to_document(&self) -> MdpDocument {
        let (sn, an) = (self.num_states, self.num_actions);
        MdpDocument {
            num_states: sn,
            num_actions: an,
            horizon: self.horizon,
            rewards: (0..self.horizon)
                .map(|h| (0..sn).map(|s| (0..an).map(|a| self.reward(h, s, a)).collect()).collect())
                .collect(),
            transitions: (0..self.horizon)
                .map(|h| (0..sn).map(|s| (0..an).map(|a| self.transition_row(h, s, a).to_vec()).collect()).collect())
                .collect(),
            initial_distribution: self.initial.clone(),
        }
    }
}

impl TryFrom<MdpDocument> for EpisodicMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let shape_err = || Error::InvalidMdp("nested table shape does not match the declared sizes".into());
        if doc.rewards.len() != doc.horizon || doc.transitions.len() != doc.horizon {
            return Err(shape_err());
        }
        let mut rewards = Vec::new();
        for stage in &doc.rewards {
            if stage.len() != doc.num_states || stage.iter().any(|row| row.len() != doc.num_actions) {
                return Err(shape_err());
            }
            rewards.extend(stage.iter().flatten());
        }
        let mut transitions = Vec::new();
        for stage in &doc.transitions {
            if stage.len() != doc.num_states {
                return Err(shape_err());
            }
            for row in stage {
                if row.len() != doc.num_actions || row.iter().any(|p| p.len() != doc.num_states) {
                    return Err(shape_err());
                }
                transitions.extend(row.iter().flatten());
            }
        }
        EpisodicMdp::new(doc.num_states, doc.num_actions, doc.horizon, rewards, transitions, doc.initial_distribution)
    }
}

impl From<EpisodicMdp> for MdpDocument {
    fn from(mdp: EpisodicMdp) -> Self {
        mdp.to_document()
    }
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(format!("probability {x} outside [0, 1]"));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > MASS_TOL {
        return Err(format!("mass {total} does not sum to 1"));
    }
    Ok(())
}

/// Sample an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Stage-indexed stochastic policy, `probs[((h*S + s)*A + a)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = num_states * num_actions * horizon;
        if probs.len() != expected {
            return Err(Error::DimensionMismatch { expected, got: probs.len() });
        }
        for (i, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(row).map_err(|m| Error::InvalidPolicy(format!("row {i}: {m}")))?;
        }
        Ok(Self { num_states, num_actions, horizon, probs })
    }

    /// Point-mass policy from `actions[h][s]`.
    pub fn deterministic(num_actions: usize, actions: &[Vec<usize>]) -> Result<Self> {
        let horizon = actions.len();
        let num_states = actions.first().map_or(0, Vec::len);
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (h, stage) in actions.iter().enumerate() {
            if stage.len() != num_states {
                return Err(Error::DimensionMismatch { expected: num_states, got: stage.len() });
            }
            for (s, &a) in stage.iter().enumerate() {
                if a >= num_actions {
                    return Err(Error::InvalidPolicy(format!("action {a} out of range at stage {h}, state {s}")));
                }
                probs[(h * num_states + s) * num_actions + a] = 1.0;
            }
        }
        Ok(Self { num_states, num_actions, horizon, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        Self { num_states, num_actions, horizon, probs: vec![p; horizon * num_states * num_actions] }
    }

    /// `(1 - eps) * greedy + eps * uniform`.
    pub fn epsilon_mixture(greedy: &Policy, eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidParameter(format!("mixture weight {eps} outside [0, 1]")));
        }
        let u = 1.0 / greedy.num_actions as f64;
        let probs = greedy.probs.iter().map(|p| (1.0 - eps) * p + eps * u).collect();
        Policy::new(greedy.num_states, greedy.num_actions, greedy.horizon, probs)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `pi_h(. | s)`.
    pub fn distribution(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    /// The action of a point-mass row, if the row is one.
    pub fn deterministic_action(&self, h: usize, s: usize) -> Option<usize> {
        let row = self.distribution(h, s);
        row.iter().position(|&p| p == 1.0)
    }

    fn check_matches(&self, mdp: &EpisodicMdp) -> Result<()> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions || self.horizon != mdp.horizon {
            return Err(Error::DimensionMismatch {
                expected: mdp.horizon * mdp.num_states * mdp.num_actions,
                got: self.horizon * self.num_states * self.num_actions,
            });
        }
        Ok(())
    }
}

/// Values of a policy (or of the optimal policy): `q[h]` for `h < H`,
/// `v[h]` for `h <= H` with `v[H] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Values {
    pub q: Vec<StateActionTable>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub values: Values,
    pub policy: Policy,
}

/// Backward induction with lowest-index tie-breaking.
pub fn optimal_values(mdp: &EpisodicMdp) -> OptimalSolution {
    let (sn, an, hn) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut v = vec![vec![0.0; sn]; hn + 1];
    let mut q = vec![StateActionTable::zeros(sn, an); hn];
    let mut actions = vec![vec![0usize; sn]; hn];
    for h in (0..hn).rev() {
        let qh = mdp.bellman_apply(h, &v[h + 1]).expect("shapes are consistent by construction");
        for s in 0..sn {
            let a = argmax_lowest(qh.row(s));
            actions[h][s] = a;
            v[h][s] = qh.get(s, a);
        }
        q[h] = qh;
    }
    let policy = Policy::deterministic(an, &actions).expect("greedy actions are in range");
    OptimalSolution { values: Values { q, v }, policy }
}

/// Exact evaluation of a (possibly stochastic) policy.
pub fn policy_value(mdp: &EpisodicMdp, pi: &Policy) -> Result<Values> {
    pi.check_matches(mdp)?;
    let (sn, an, hn) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut v = vec![vec![0.0; sn]; hn + 1];
    let mut q = vec![StateActionTable::zeros(sn, an); hn];
    for h in (0..hn).rev() {
        let qh = mdp.bellman_apply(h, &v[h + 1])?;
        for s in 0..sn {
            v[h][s] = pi.distribution(h, s).iter().zip(qh.row(s)).map(|(p, x)| p * x).sum();
        }
        q[h] = qh;
    }
    Ok(Values { q, v })
}

/// Per-stage state-action occupancy `d_h(s,a)` from the initial distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub stages: Vec<StateActionTable>,
}

impl OccupancyMeasure {
    pub fn stage(&self, h: usize) -> &StateActionTable {
        &self.stages[h]
    }

    /// `E_{d_h}[f]`.
    pub fn expectation(&self, h: usize, f: &StateActionTable) -> f64 {
        self.stages[h].values().iter().zip(f.values()).map(|(d, x)| d * x).sum()
    }
}

pub fn occupancy_measure(mdp: &EpisodicMdp, pi: &Policy) -> Result<OccupancyMeasure> {
    occupancy_from(mdp, pi, mdp.initial_distribution())
}

/// Occupancy started from an arbitrary state distribution at stage 0.
pub fn occupancy_from(mdp: &EpisodicMdp, pi: &Policy, start: &[f64]) -> Result<OccupancyMeasure> {
    pi.check_matches(mdp)?;
    let (sn, an, hn) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    if start.len() != sn {
        return Err(Error::DimensionMismatch { expected: sn, got: start.len() });
    }
    let mut stages = Vec::with_capacity(hn);
    let mut state_dist = start.to_vec();
    for h in 0..hn {
        let d = StateActionTable::from_fn(sn, an, |s, a| state_dist[s] * pi.distribution(h, s)[a]);
        let mut next = vec![0.0; sn];
        for s in 0..sn {
            for a in 0..an {
                let mass = d.get(s, a);
                if mass > 0.0 {
                    for (s2, p) in mdp.transition_row(h, s, a).iter().enumerate() {
                        next[s2] += mass * p;
                    }
                }
            }
        }
        stages.push(d);
        state_dist = next;
    }
    Ok(OccupancyMeasure { stages })
}

/// `E_{s ~ init}[V*_0(s) - V^pi_0(s)]`.
pub fn suboptimality_gap(mdp: &EpisodicMdp, pi: &Policy) -> Result<f64> {
    let opt = optimal_values(mdp);
    let val = policy_value(mdp, pi)?;
    Ok(mdp.initial.iter().enumerate().map(|(s, p)| p * (opt.values.v[0][s] - val.v[0][s])).sum())
}

/// Sampling access to an environment. Rollouts only ever see this trait, so
/// instrumented implementations can count how often dynamics are touched.
pub trait Environment {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize;
    fn reward(&self, h: usize, s: usize, a: usize) -> f64;
    fn sample_next<R: Rng + ?Sized>(&self, rng: &mut R, h: usize, s: usize, a: usize) -> usize;
}

impl Environment for EpisodicMdp {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(rng, &self.initial)
    }

    fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        EpisodicMdp::reward(self, h, s, a)
    }

    fn sample_next<R: Rng + ?Sized>(&self, rng: &mut R, h: usize, s: usize, a: usize) -> usize {
        sample_index(rng, self.transition_row(h, s, a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn single_stage(s: usize, a: usize, rewards: Vec<f64>, transitions: Vec<f64>) -> EpisodicMdp {
        let init = {
            let mut v = vec![0.0; s];
            v[0] = 1.0;
            v
        };
        EpisodicMdp::new(s, a, 1, rewards, transitions, init).unwrap()
    }

    #[test]
    fn bellman_apply_zero_continuation_returns_rewards() {
        let mdp = single_stage(2, 2, vec![0.1, 0.2, 0.3, 0.4], vec![0.5; 8]);
        let q = mdp.bellman_apply(0, &[0.0, 0.0]).unwrap();
        assert_eq!(q.values(), &[0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn bellman_apply_point_mass_adds_continuation() {
        let mdp = single_stage(2, 1, vec![0.3, 0.6], vec![0.0, 1.0, 0.0, 1.0]);
        let q = mdp.bellman_apply(0, &[5.0, 2.5]).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 2.8, epsilon = 1e-15);
        assert_abs_diff_eq!(q.get(1, 0), 3.1, epsilon = 1e-15);
    }

    #[test]
    fn bellman_apply_dot_product_example() {
        let mdp = single_stage(2, 1, vec![0.0, 0.0], vec![0.25, 0.75, 1.0, 0.0]);
        let q = mdp.bellman_apply(0, &[0.0, 4.0]).unwrap();
        assert_abs_diff_eq!(q.get(0, 0), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn bellman_errors() {
        let mdp = single_stage(2, 1, vec![0.0, 0.0], vec![0.25, 0.75, 1.0, 0.0]);
        assert_eq!(mdp.bellman_apply(1, &[0.0, 0.0]), Err(Error::StageOutOfRange { stage: 1, horizon: 1 }));
        assert_eq!(mdp.bellman_apply(0, &[0.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 }));
        assert!(mdp.bellman_second_moment(3, &[0.0, 0.0]).is_err());
        assert!(mdp.conditional_variance(0, &[0.0; 3]).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let mdp = single_stage(2, 1, vec![1.0, 0.5], vec![0.5, 0.5, 0.0, 1.0]);
        let m0 = mdp.bellman_second_moment(0, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(m0.get(0, 0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m0.get(1, 0), 0.25, epsilon = 1e-15);
        let m = mdp.bellman_second_moment(0, &[0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m.get(0, 0), 5.0, epsilon = 1e-15);
        // point mass into state 1: (0.5 + 2)^2
        assert_abs_diff_eq!(m.get(1, 0), 6.25, epsilon = 1e-15);
    }

    #[test]
    fn variance_examples() {
        let mdp = single_stage(2, 1, vec![1.0, 0.5], vec![0.5, 0.5, 0.0, 1.0]);
        let var = mdp.conditional_variance(0, &[0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(var.get(0, 0), 1.0, epsilon = 1e-15);
        assert_eq!(var.get(1, 0), 0.0);
        let tv = mdp.truncated_variance(0, &[0.0, 2.0]).unwrap();
        assert_eq!(tv.values(), &[1.0, 1.0]);
        let flat = mdp.conditional_variance(0, &[1.7, 1.7]).unwrap();
        assert!(flat.values().iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        assert!(EpisodicMdp::new(1, 1, 1, vec![1.5], vec![1.0], vec![1.0]).is_err());
        assert!(EpisodicMdp::new(2, 1, 1, vec![0.0, 0.0], vec![0.5, 0.6, 1.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(EpisodicMdp::new(1, 1, 1, vec![0.0], vec![1.0], vec![0.9]).is_err());
        assert!(EpisodicMdp::new(0, 1, 1, vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn one_step_horizon_values() {
        let mdp = single_stage(2, 2, vec![0.1, 0.7, 0.9, 0.2], vec![0.5; 8]);
        let opt = optimal_values(&mdp);
        assert_eq!(opt.values.q[0], mdp.reward_table(0));
        assert_eq!(opt.values.v[0], vec![0.7, 0.9]);
        let pi0 = Policy::deterministic(2, &[vec![0, 0]]).unwrap();
        let val = policy_value(&mdp, &pi0).unwrap();
        assert_eq!(val.v[0], vec![0.1, 0.9]);
    }

    #[test]
    fn unit_rewards_telescope() {
        let (s, a, h) = (3, 2, 4);
        let rows: Vec<f64> = (0..s * a * h).flat_map(|_| [0.2, 0.3, 0.5]).collect();
        let mdp = EpisodicMdp::new(s, a, h, vec![1.0; s * a * h], rows, vec![1.0, 0.0, 0.0]).unwrap();
        let opt = optimal_values(&mdp);
        for hh in 0..=h {
            for st in 0..s {
                assert_abs_diff_eq!(opt.values.v[hh][st], (h - hh) as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn mixture_and_uniform_policies_are_valid() {
        let greedy = Policy::deterministic(3, &[vec![2, 0]]).unwrap();
        let mix = Policy::epsilon_mixture(&greedy, 0.3).unwrap();
        assert_abs_diff_eq!(mix.distribution(0, 0)[2], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(mix.distribution(0, 1)[1], 0.1, epsilon = 1e-15);
        assert_eq!(Policy::uniform(2, 4, 1).distribution(0, 1), &[0.25; 4]);
        assert_eq!(greedy.deterministic_action(0, 0), Some(2));
        assert_eq!(mix.deterministic_action(0, 0), None);
        assert!(Policy::deterministic(2, &[vec![2]]).is_err());
    }

    #[test]
    fn occupancy_single_state_and_first_stage() {
        let mdp = EpisodicMdp::new(1, 2, 2, vec![0.5; 4], vec![1.0; 4], vec![1.0]).unwrap();
        let pi = Policy::new(1, 2, 2, vec![0.2, 0.8, 0.6, 0.4]).unwrap();
        let occ = occupancy_measure(&mdp, &pi).unwrap();
        assert_eq!(occ.stage(0).values(), &[0.2, 0.8]);
        assert_eq!(occ.stage(1).values(), &[0.6, 0.4]);
    }

    #[test]
    fn document_round_trip() {
        let mdp = single_stage(2, 1, vec![1.0, 0.5], vec![0.5, 0.5, 0.0, 1.0]);
        let json = serde_json::to_string(&mdp).unwrap();
        let back: EpisodicMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mdp);
        let mut doc = mdp.to_document();
        doc.rewards[0][0][0] = 2.0;
        assert!(EpisodicMdp::try_from(doc).is_err());
    }
}
