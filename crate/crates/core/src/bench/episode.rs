use std::collections::BTreeSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BenchError, Method};
use crate::assign::{greedy, hungarian, random_assign, Assignment, CostMatrix};
use crate::policy::{ExecutionMode, PolicyParams};
use crate::ppo::DECISION_DT;
use crate::world::{advance, arbitrate, init_episode, spawn_tasks, AgentStatus, EpisodeState, TaskStatus, WorldConfig};

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub method: Method,
    pub n_agents: usize,
    pub episode: usize,
    pub seed: u64,
    /// Sum of travel-time costs of all granted assignments, in seconds.
    pub total_cost: f64,
    pub tasks: usize,
    pub assigned: usize,
    /// Assigned tasks that no decision step saw requested by two agents.
    pub conflict_free: usize,
    pub decision_steps: usize,
    pub mean_path_length: f64,
    /// Wall time spent choosing actions; not reproducible.
    pub alloc_time_s: f64,
}

impl EpisodeMetrics {
    pub fn success_rate(&self) -> f64 {
        if self.tasks == 0 {
            return 100.0;
        }
        100.0 * self.conflict_free as f64 / self.tasks as f64
    }

    pub fn all_assigned(&self) -> bool {
        self.assigned == self.tasks
    }
}

/// Idle agents and Waiting slots that some Idle agent can reach.
fn open_problem(state: &EpisodeState) -> (Vec<usize>, Vec<usize>, CostMatrix) {
    let costs = state.cached_costs().expect("costs computed before deciding");
    let agents: Vec<usize> = state.agents.iter().filter(|a| a.status == AgentStatus::Idle).map(|a| a.id).collect();
    let slots: Vec<usize> = (0..costs.n_tasks())
        .filter(|&s| state.slot_task(s).is_some_and(|t| t.status == TaskStatus::Waiting))
        .filter(|&s| agents.iter().any(|&i| costs.get(i, s).is_finite()))
        .collect();
    let mut sub = CostMatrix::filled(agents.len(), slots.len(), f64::INFINITY);
    for (r, &i) in agents.iter().enumerate() {
        for (c, &s) in slots.iter().enumerate() {
            sub.set(r, c, costs.get(i, s));
        }
    }
    (agents, slots, sub)
}

/// Tasks picked by two or more agents when each chooses on its own.
fn local_collisions(picks: &[Option<usize>]) -> Vec<usize> {
    let mut seen = BTreeSet::new();
    let mut hit = BTreeSet::new();
    for p in picks.iter().flatten() {
        if !seen.insert(*p) {
            hit.insert(*p);
        }
    }
    hit.into_iter().collect()
}

/// Joint action for a centralized baseline plus the tasks its agent-local
/// variant would have fought over. Costs must already be computed.
pub fn baseline_actions(method: Method, state: &EpisodeState, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>), BenchError> {
    let (agents, slots, sub) = open_problem(state);
    let mut actions = vec![0; state.agents.len()];
    if slots.is_empty() {
        return Ok((actions, Vec::new()));
    }
    let (assignment, picks): (Assignment, Vec<Option<usize>>) = match method {
        Method::Hungarian => (hungarian(&sub)?, Vec::new()),
        Method::Greedy => {
            let picks = (0..sub.n_agents())
                .map(|r| {
                    (0..sub.n_tasks())
                        .filter(|&c| sub.get(r, c).is_finite())
                        .min_by(|&a, &b| sub.get(r, a).total_cmp(&sub.get(r, b)).then(a.cmp(&b)))
                })
                .collect();
            (greedy(&sub), picks)
        }
        Method::Random => {
            let picks = (0..sub.n_agents())
                .map(|r| {
                    let options: Vec<usize> = (0..sub.n_tasks()).filter(|&c| sub.get(r, c).is_finite()).collect();
                    (!options.is_empty()).then(|| options[rng.gen_range(0..options.len())])
                })
                .collect();
            (random_assign(&sub, rng.gen()), picks)
        }
        Method::Magnnet => unreachable!("learned policy is not a baseline"),
    };
    for &(r, c) in assignment.pairs() {
        actions[agents[r]] = slots[c] + 1;
    }
    let contested = local_collisions(&picks)
        .into_iter()
        .map(|c| state.slots[slots[c]].expect("open slots hold tasks"))
        .collect();
    Ok((actions, contested))
}

/// Plays one episode with `method` choosing actions at every decision step.
pub fn run_episode(method: Method, world: &WorldConfig, seed: u64, policy: Option<&PolicyParams>) -> Result<(EpisodeMetrics, EpisodeState), BenchError> {
    let mut state = init_episode(world, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbe9c_0000 ^ method as u64);
    let mut contested = BTreeSet::new();
    let mut alloc = 0.0;
    while !state.is_terminal() {
        if state.needs_decision() {
            state.ensure_costs();
            let started = Instant::now();
            let actions = match method {
                Method::Magnnet => {
                    let p = policy.ok_or_else(|| BenchError::Config("magnnet needs a checkpoint".into()))?;
                    p.decide(&mut state, ExecutionMode::Eval, false, &mut rng)?.actions
                }
                _ => {
                    let (actions, local) = baseline_actions(method, &state, &mut rng)?;
                    contested.extend(local);
                    actions
                }
            };
            alloc += started.elapsed().as_secs_f64();
            arbitrate(&mut state, &actions)?;
        }
        advance(&mut state, DECISION_DT);
        spawn_tasks(&mut state);
        state.check_invariants()?;
    }
    contested.extend(state.ledger.contested.iter().copied());
    let assigned: Vec<usize> = state.tasks.iter().filter(|t| t.status != TaskStatus::Waiting).map(|t| t.id).collect();
    let records = &state.ledger.records;
    let metrics = EpisodeMetrics {
        method,
        n_agents: world.n_agents,
        episode: 0,
        seed,
        total_cost: state.ledger.total_cost(),
        tasks: state.tasks.len(),
        assigned: assigned.len(),
        conflict_free: assigned.iter().filter(|t| !contested.contains(t)).count(),
        decision_steps: state.ledger.decision_steps,
        mean_path_length: if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.path_length).sum::<f64>() / records.len() as f64
        },
        alloc_time_s: alloc,
    };
    Ok((metrics, state))
}
