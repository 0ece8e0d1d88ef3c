//! Offline datasets: behavior-policy rollouts and the two-halves split.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Environment, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub episode: usize,
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// Episodes of `H` consecutive records each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineDataset {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub episodes: Vec<Vec<TransitionRecord>>,
    pub seed: u64,
    pub behavior: String,
}

impl OfflineDataset {
    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Records of stage `h` across all episodes, in episode order.
    pub fn stage(&self, h: usize) -> impl Iterator<Item = &TransitionRecord> + '_ {
        self.episodes.iter().map(move |ep| &ep[h])
    }

    /// Check the per-episode chaining and shape invariants.
    pub fn validate(&self) -> Result<()> {
        for (k, ep) in self.episodes.iter().enumerate() {
            if ep.len() != self.horizon {
                return Err(Error::InvalidDataset(format!("episode {k} has {} records, expected {}", ep.len(), self.horizon)));
            }
            for (h, rec) in ep.iter().enumerate() {
                if rec.stage != h || rec.state >= self.num_states || rec.action >= self.num_actions || rec.next_state >= self.num_states {
                    return Err(Error::InvalidDataset(format!("malformed record at episode {k}, stage {h}")));
                }
                if !(0.0..=1.0).contains(&rec.reward) {
                    return Err(Error::InvalidDataset(format!("reward {} outside [0, 1]", rec.reward)));
                }
                if h + 1 < ep.len() && ep[h + 1].state != rec.next_state {
                    return Err(Error::InvalidDataset(format!("episode {k} breaks the state chain at stage {h}")));
                }
            }
        }
        Ok(())
    }

    /// Flat CSV with header `episode,stage,state,action,reward,next_state`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,stage,state,action,reward,next_state\n");
        for rec in self.episodes.iter().flatten() {
            let _ = writeln!(out, "{},{},{},{},{},{}", rec.episode, rec.stage, rec.state, rec.action, rec.reward, rec.next_state);
        }
        out
    }

    fn with_episodes(&self, episodes: Vec<Vec<TransitionRecord>>) -> Self {
        Self { episodes, ..self.clone_header() }
    }

    fn clone_header(&self) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            episodes: Vec::new(),
            seed: self.seed,
            behavior: self.behavior.clone(),
        }
    }
}

/// Roll out `mu` for `num_episodes` independent episodes.
///
/// One ChaCha8 stream per call, consumed per episode as: initial state, then
/// for each stage the action draw followed by the transition draw.
pub fn rollout_dataset<E: Environment>(env: &E, mu: &Policy, num_episodes: usize, seed: u64) -> Result<OfflineDataset> {
    if mu.num_states() != env.num_states() || mu.num_actions() != env.num_actions() || mu.horizon() != env.horizon() {
        return Err(Error::InvalidPolicy("behavior policy shape does not match the environment".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(num_episodes);
    for k in 0..num_episodes {
        let mut s = env.sample_initial(&mut rng);
        let mut ep = Vec::with_capacity(env.horizon());
        for h in 0..env.horizon() {
            let a = sample_index(&mut rng, mu.distribution(h, s));
            let next = env.sample_next(&mut rng, h, s, a);
            ep.push(TransitionRecord { episode: k, stage: h, state: s, action: a, reward: env.reward(h, s, a), next_state: next });
            s = next;
        }
        episodes.push(ep);
    }
    Ok(OfflineDataset {
        num_states: env.num_states(),
        num_actions: env.num_actions(),
        horizon: env.horizon(),
        episodes,
        seed,
        behavior: String::new(),
    })
}

/// The two halves consumed by the planner: `planning` feeds the weighted
/// pessimistic backups, `variance` feeds the variance estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub planning: OfflineDataset,
    pub variance: OfflineDataset,
}

impl SplitDataset {
    pub fn episodes_per_half(&self) -> usize {
        self.planning.num_episodes()
    }

    pub fn swapped(&self) -> Self {
        Self { planning: self.variance.clone(), variance: self.planning.clone() }
    }
}

/// First `K` episodes to the planning half, last `K` to the variance half.
pub fn split_dataset(data: &OfflineDataset) -> Result<SplitDataset> {
    let n = data.num_episodes();
    if !n.is_multiple_of(2) {
        return Err(Error::OddEpisodeCount(n));
    }
    let (first, second) = data.episodes.split_at(n / 2);
    Ok(SplitDataset { planning: data.with_episodes(first.to_vec()), variance: data.with_episodes(second.to_vec()) })
}
