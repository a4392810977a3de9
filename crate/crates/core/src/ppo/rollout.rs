use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::gae::compute_gae;
use super::TrainError;
use crate::gnn::HeteroGraph;
use crate::policy::{ExecutionMode, PolicyParams};
use crate::world::{advance, arbitrate, init_episode, spawn_tasks, team_bonus, WorldConfig};

/// Seconds of simulated time between decision steps.
pub const DECISION_DT: f64 = 1.0;

/// Global state at one decision step, shared by that step's transitions.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub graph: HeteroGraph,
    pub value: f64,
}

/// One agent decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    /// Index into [`RolloutBuffer::steps`].
    pub step: usize,
    pub agent: usize,
    pub obs: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub entropy: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    pub steps: Vec<StepRecord>,
    pub transitions: Vec<Transition>,
    /// Team return (all agents, bonus included) of each finished episode.
    pub episode_rewards: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn append(&mut self, other: RolloutBuffer) {
        let offset = self.steps.len();
        self.steps.extend(other.steps);
        self.transitions.extend(other.transitions.into_iter().map(|mut t| {
            t.step += offset;
            t
        }));
        self.episode_rewards.extend(other.episode_rewards);
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.transitions.is_empty() {
            return 0.0;
        }
        self.transitions.iter().map(|t| t.entropy).sum::<f64>() / self.transitions.len() as f64
    }
}

/// Plays one episode with the stochastic actor and fills in per-agent
/// advantages. Only Idle agents at a decision step produce transitions.
pub fn collect_episode(params: &PolicyParams, world: &WorldConfig, seed: u64, gamma: f64, lambda: f64) -> Result<RolloutBuffer, TrainError> {
    let mut state = init_episode(world, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a11c_e5ee_d000);
    let mut buf = RolloutBuffer::default();
    let mut total = 0.0;
    while !state.is_terminal() {
        if state.needs_decision() {
            let step = params.decide(&mut state, ExecutionMode::Train, true, &mut rng)?;
            let value = step.value.expect("train mode computes values");
            let outcome = arbitrate(&mut state, &step.actions)?;
            let idx = buf.steps.len();
            buf.steps.push(StepRecord { graph: step.graph, value });
            for d in step.decisions {
                let reward = outcome.rewards[d.agent];
                total += reward;
                buf.transitions.push(Transition {
                    step: idx,
                    agent: d.agent,
                    obs: d.obs,
                    mask: d.mask,
                    action: d.action,
                    log_prob: d.log_prob,
                    entropy: d.entropy,
                    reward,
                    value,
                    done: false,
                    advantage: 0.0,
                    ret: 0.0,
                });
            }
        }
        advance(&mut state, DECISION_DT);
        spawn_tasks(&mut state);
        state.check_invariants()?;
    }
    let bonus = team_bonus(&state);
    for agent in 0..state.agents.len() {
        let idx: Vec<usize> = (0..buf.transitions.len()).filter(|&k| buf.transitions[k].agent == agent).collect();
        let Some(&last) = idx.last() else { continue };
        buf.transitions[last].reward += bonus;
        buf.transitions[last].done = true;
        total += bonus;
        let rewards: Vec<f64> = idx.iter().map(|&k| buf.transitions[k].reward).collect();
        let values: Vec<f64> = idx.iter().map(|&k| buf.transitions[k].value).collect();
        let dones: Vec<bool> = idx.iter().map(|&k| buf.transitions[k].done).collect();
        let (adv, ret) = compute_gae(&rewards, &values, &dones, 0.0, gamma, lambda);
        for (j, &k) in idx.iter().enumerate() {
            buf.transitions[k].advantage = adv[j];
            buf.transitions[k].ret = ret[j];
        }
    }
    buf.episode_rewards.push(total);
    Ok(buf)
}

/// Runs whole episodes in fixed-size rounds until at least `min_transitions`
/// are collected. Episode `k` uses seed `seed_of(k)`; the result does not
/// depend on the number of worker threads.
pub fn collect_rollout(
    params: &PolicyParams,
    world: &WorldConfig,
    min_transitions: usize,
    first_episode: u64,
    seed_of: impl Fn(u64) -> u64 + Sync,
    gamma: f64,
    lambda: f64,
    round: usize,
) -> Result<(RolloutBuffer, u64), TrainError> {
    let mut buf = RolloutBuffer::default();
    let mut next = first_episode;
    while buf.len() < min_transitions {
        let ids: Vec<u64> = (next..next + round as u64).collect();
        let parts: Vec<Result<RolloutBuffer, TrainError>> = ids
            .par_iter()
            .map(|&k| collect_episode(params, world, seed_of(k), gamma, lambda))
            .collect();
        for p in parts {
            buf.append(p?);
        }
        next += round as u64;
    }
    Ok((buf, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::GnnConfig;

    fn setup() -> (PolicyParams, WorldConfig) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParams::init(4, 4, GnnConfig::default(), &mut rng);
        let mut w = WorldConfig::static_scenario(4);
        w.grid_dims = [20, 20, 8];
        (p, w)
    }

    #[test]
    fn episode_is_deterministic_and_consistent() {
        let (p, w) = setup();
        let a = collect_episode(&p, &w, 7, 0.99, 0.95).unwrap();
        let b = collect_episode(&p, &w, 7, 0.99, 0.95).unwrap();
        assert_eq!(a.transitions, b.transitions);
        assert!(!a.is_empty());
        for t in &a.transitions {
            assert!(t.mask[t.action]);
            assert!(t.log_prob <= 0.0);
            assert!((t.ret - (t.advantage + t.value)).abs() < 1e-12);
        }
        for agent in 0..4 {
            let dones: Vec<bool> = a.transitions.iter().filter(|t| t.agent == agent).map(|t| t.done).collect();
            assert_eq!(dones.iter().filter(|&&d| d).count(), 1);
            assert!(*dones.last().unwrap());
        }
    }

    #[test]
    fn rollout_reaches_batch_size() {
        let (p, w) = setup();
        let (buf, next) = collect_rollout(&p, &w, 512, 0, |k| k * 31 + 1, 0.99, 0.95, 4).unwrap();
        assert!(buf.len() >= 512);
        assert_eq!(next % 4, 0);
        assert!(buf.transitions.iter().all(|t| t.step < buf.steps.len()));
        // 4 agents and 512 transitions need at least 128 decision steps
        assert!(buf.steps.len() >= 128);
    }
}
