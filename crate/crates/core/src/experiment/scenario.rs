//! Scenario MDPs and behavior policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{optimal_values, EpisodicMdp, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ScenarioSpec {
    /// Three states, two actions, `H = 3`, generated from a seed.
    Default {
        #[serde(default = "default_generator_seed")]
        generator_seed: u64,
    },
    /// The default layout with caller-chosen action gaps, one per decision point.
    Graded {
        #[serde(default)]
        generator_seed: u64,
        gaps: [f64; 9],
    },
    /// Fixed two-state, two-action, `H = 2` instance with a unique optimal policy.
    TwoState,
    /// Random instance of arbitrary size, generated from a seed.
    Random { num_states: usize, num_actions: usize, horizon: usize, generator_seed: u64 },
    /// Explicit MDP document.
    Custom { mdp: EpisodicMdp },
}

fn default_generator_seed() -> u64 {
    DEFAULT_GENERATOR_SEED
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec::Default { generator_seed: DEFAULT_GENERATOR_SEED }
    }
}

impl ScenarioSpec {
    pub fn label(&self) -> String {
        match self {
            ScenarioSpec::Default { .. } => "default".into(),
            ScenarioSpec::Graded { .. } => "graded".into(),
            ScenarioSpec::TwoState => "two_state".into(),
            ScenarioSpec::Random { .. } => "random".into(),
            ScenarioSpec::Custom { .. } => "custom".into(),
        }
    }

    pub fn build(&self) -> Result<EpisodicMdp> {
        match self {
            ScenarioSpec::Default { generator_seed } => default_scenario(*generator_seed),
            ScenarioSpec::Graded { generator_seed, gaps } => graded_scenario(*generator_seed, gaps),
            ScenarioSpec::TwoState => two_state_instance(),
            ScenarioSpec::Random { num_states, num_actions, horizon, generator_seed } => {
                random_mdp(*num_states, *num_actions, *horizon, &mut ChaCha8Rng::seed_from_u64(*generator_seed))
            }
            ScenarioSpec::Custom { mdp } => Ok(mdp.clone()),
        }
    }
}

/// Transition row `0.1 + 0.7 w` with `w` uniform on the simplex: entries in
/// `[0.1, 0.8]` for three states.
fn mixed_row<R: Rng + ?Sized>(rng: &mut R, num_states: usize) -> Vec<f64> {
    let floor = 0.1;
    let free = 1.0 - floor * num_states as f64;
    // uniform on the simplex via normalized exponentials
    let e: Vec<f64> = (0..num_states).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    let mut row: Vec<f64> = e.iter().map(|x| floor + free * x / total).collect();
    let drift: f64 = row.iter().sum::<f64>() - 1.0;
    row[num_states - 1] -= drift;
    row
}

/// Random MDP with `U[0,1]` rewards and transition entries bounded away from zero.
pub fn random_mdp<R: Rng + ?Sized>(num_states: usize, num_actions: usize, horizon: usize, rng: &mut R) -> Result<EpisodicMdp> {
    if num_states == 0 || num_states >= 10 {
        // the 0.1 floor no longer fits; plain normalized rows
        return random_plain(num_states, num_actions, horizon, rng);
    }
    let cells = num_states * num_actions * horizon;
    let rewards: Vec<f64> = (0..cells).map(|_| rng.gen()).collect();
    let transitions: Vec<f64> = (0..cells).flat_map(|_| mixed_row(rng, num_states)).collect();
    let initial = vec![1.0 / num_states as f64; num_states];
    EpisodicMdp::new(num_states, num_actions, horizon, rewards, transitions, fix_mass(initial))
}

fn random_plain<R: Rng + ?Sized>(num_states: usize, num_actions: usize, horizon: usize, rng: &mut R) -> Result<EpisodicMdp> {
    if num_states == 0 {
        return Err(Error::InvalidMdp("need at least one state".into()));
    }
    let cells = num_states * num_actions * horizon;
    let rewards: Vec<f64> = (0..cells).map(|_| rng.gen()).collect();
    let mut transitions = Vec::with_capacity(cells * num_states);
    for _ in 0..cells {
        let raw: Vec<f64> = (0..num_states).map(|_| rng.gen::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        transitions.extend(fix_mass(raw.iter().map(|x| x / total).collect()));
    }
    EpisodicMdp::new(num_states, num_actions, horizon, rewards, transitions, fix_mass(vec![1.0 / num_states as f64; num_states]))
}

/// Push round-off into the last entry so the mass is 1 to machine precision.
fn fix_mass(mut p: Vec<f64>) -> Vec<f64> {
    let drift: f64 = p.iter().sum::<f64>() - 1.0;
    if let Some(last) = p.last_mut() {
        *last -= drift;
    }
    p
}

/// The default desk-scale scenario.
///
/// Transitions come from the generator seed. Rewards are laid out so that
/// the action gaps of the optimal Q-function at the nine decision points
/// (stage, state) are spread geometrically over `[0.0003, 0.025]`; see
/// [`graded_rewards`].
pub fn default_scenario(generator_seed: u64) -> Result<EpisodicMdp> {
    graded_scenario(generator_seed, &DEFAULT_GAPS)
}

/// Default-shaped scenario with caller-chosen action gaps, one per
/// decision point.
pub fn graded_scenario(generator_seed: u64, gaps: &[f64; 9]) -> Result<EpisodicMdp> {
    let (sn, an, hn) = (3, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(generator_seed);
    let transitions: Vec<f64> = (0..sn * an * hn).flat_map(|_| mixed_row(&mut rng, sn)).collect();
    let base: Vec<f64> = (0..sn * hn).map(|_| rng.gen::<f64>()).collect();
    let rewards = graded_rewards(sn, an, hn, &transitions, &base, gaps)?;
    EpisodicMdp::new(sn, an, hn, rewards, transitions, vec![0.4, 0.3, 0.3])
}

/// Gap targets for the nine decision points, largest first.
pub const DEFAULT_GAPS: [f64; 9] = [0.025, 0.0144, 0.00827, 0.00476, 0.00274, 0.00158, 0.000906, 0.000521, 0.0003];

/// Generator seed of the default scenario.
pub const DEFAULT_GENERATOR_SEED: u64 = 14;

/// Rewards whose optimal action gaps equal [`DEFAULT_GAPS`].
///
/// Works backwards: with `V*_{h+1}` fixed, the reward difference between
/// the two actions at `(h, s)` is set so their Q-values differ by the target
/// gap (alternating which action wins); `base` in `[0, 1]` places the pair
/// inside `[0, 1]`.
fn graded_rewards(sn: usize, an: usize, hn: usize, transitions: &[f64], base: &[f64], gaps: &[f64; 9]) -> Result<Vec<f64>> {
    let mut rewards = vec![0.0; sn * an * hn];
    let mut v_next = vec![0.0; sn];
    let row = |h: usize, s: usize, a: usize| {
        let start = ((h * sn + s) * an + a) * sn;
        &transitions[start..start + sn]
    };
    for h in (0..hn).rev() {
        let mut v = vec![0.0; sn];
        for s in 0..sn {
            let point = h * sn + s;
            let gap = gaps[(point * 4) % gaps.len()];
            if !(gap > 0.0) {
                return Err(Error::InvalidMdp(format!("action gap {gap} must be positive")));
            }
            let cont = |a: usize| row(h, s, a).iter().zip(&v_next).map(|(p, x)| p * x).sum::<f64>();
            let (c0, c1) = (cont(0), cont(1));
            let sign = if point.is_multiple_of(2) { 1.0 } else { -1.0 };
            let diff = c0 - c1 + sign * gap;
            if diff.abs() > 1.0 {
                return Err(Error::InvalidMdp(format!("reward gap {diff} too wide at stage {h}, state {s}")));
            }
            let mid = 0.5 + (base[point] - 0.5) * (1.0 - diff.abs());
            let (r0, r1) = (mid - diff / 2.0, mid + diff / 2.0);
            let q0 = r0 + c0;
            rewards[(h * sn + s) * an] = r0;
            rewards[(h * sn + s) * an + 1] = r1;
            v[s] = q0.max(q0 + sign * gap);
        }
        v_next = v;
    }
    Ok(rewards)
}

/// Fixed two-state instance: `S = A = 2`, `H = 2`, unique optimal policy
/// `(h=0: s0 -> 1, s1 -> 0; h=1: s0 -> 0, s1 -> 1)`.
pub fn two_state_instance() -> Result<EpisodicMdp> {
    let rewards = vec![0.2, 0.6, 0.7, 0.3, 0.5, 0.1, 0.4, 0.9];
    let transitions = vec![
        0.7, 0.3, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7, // h = 0
        0.5, 0.5, 0.4, 0.6, 0.3, 0.7, 0.8, 0.2, // h = 1
    ];
    EpisodicMdp::new(2, 2, 2, rewards, transitions, vec![0.5, 0.5])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviorSpec {
    Uniform,
    /// `(1 - epsilon) pi* + epsilon uniform`.
    EpsilonOptimal { epsilon: f64 },
}

impl Default for BehaviorSpec {
    fn default() -> Self {
        BehaviorSpec::EpsilonOptimal { epsilon: 0.3 }
    }
}

impl BehaviorSpec {
    pub fn build(&self, mdp: &EpisodicMdp) -> Result<Policy> {
        match *self {
            BehaviorSpec::Uniform => Ok(Policy::uniform(mdp.num_states(), mdp.num_actions(), mdp.horizon())),
            BehaviorSpec::EpsilonOptimal { epsilon } => Policy::epsilon_mixture(&optimal_values(mdp).policy, epsilon),
        }
    }

    pub fn label(&self) -> String {
        match self {
            BehaviorSpec::Uniform => "uniform".into(),
            BehaviorSpec::EpsilonOptimal { epsilon } => format!("epsilon_optimal({epsilon})"),
        }
    }
}
