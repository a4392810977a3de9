use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::episode::{AssignmentRecord, EpisodeState};
use super::events::{EventKind, EventRecord};
use super::{AgentStatus, RewardShaping, TaskState, TaskStatus, WorldError};
use crate::pathplan::{resolve_one, Cell, Path, PathRequest};

/// Result of one decision step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    /// (agent, task) pairs granted this step, sorted by agent.
    pub assignments: Vec<(usize, usize)>,
    /// (task, requesters) for every task requested by two or more agents.
    pub conflicts: Vec<(usize, Vec<usize>)>,
    pub rewards: Vec<f64>,
    /// Agents whose action named an empty, Done, Assigned or unreachable slot.
    pub invalid: Vec<usize>,
    /// Idle agents that turned down every task while one was reachable.
    pub idle_rejects: Vec<usize>,
    /// Task requested by each agent, if any.
    pub requests: Vec<Option<usize>>,
}

impl DecisionOutcome {
    pub fn losers(&self) -> impl Iterator<Item = usize> + '_ {
        self.conflicts.iter().flat_map(move |(task, reqs)| {
            let winner = self.assignments.iter().find(|(_, t)| t == task).map(|(a, _)| *a);
            reqs.iter().copied().filter(move |&a| Some(a) != winner)
        })
    }
}

/// Resolves one action per agent: 0 rejects, `j` requests slot `j - 1`.
///
/// Each requested task goes to its cheapest requester (ties to the lower id),
/// which is handed a reserved path. Actions of non-Idle agents are ignored.
pub fn arbitrate(state: &mut EpisodeState, actions: &[usize]) -> Result<DecisionOutcome, WorldError> {
    let n = state.agents.len();
    if actions.len() != n {
        return Err(WorldError::ActionCount { expected: n, got: actions.len() });
    }
    let costs = state.ensure_costs().clone();
    let tick = state.tick();
    let mut outcome = DecisionOutcome {
        requests: vec![None; n],
        ..Default::default()
    };
    let mut by_task: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &a) in actions.iter().enumerate() {
        if state.agents[i].status != AgentStatus::Idle {
            continue;
        }
        let reachable = (0..costs.n_tasks()).any(|s| {
            state.slot_task(s).is_some_and(|t| t.status == TaskStatus::Waiting) && costs.get(i, s).is_finite()
        });
        if a == 0 {
            if reachable {
                outcome.idle_rejects.push(i);
            }
            continue;
        }
        let slot = a - 1;
        let valid = slot < costs.n_tasks()
            && state.slot_task(slot).is_some_and(|t| t.status == TaskStatus::Waiting)
            && costs.get(i, slot).is_finite();
        if !valid {
            outcome.invalid.push(i);
            if reachable {
                outcome.idle_rejects.push(i);
            }
            continue;
        }
        let task = state.slots[slot].expect("checked above");
        state.agents[i].status = AgentStatus::Accept;
        outcome.requests[i] = Some(task);
        by_task.entry(task).or_default().push(i);
    }

    let mut winners = Vec::new();
    for (&task, reqs) in &by_task {
        let slot = state.tasks[task].slot;
        let winner = *reqs
            .iter()
            .min_by(|&&a, &&b| costs.get(a, slot).total_cmp(&costs.get(b, slot)).then(a.cmp(&b)))
            .expect("at least one requester");
        if reqs.len() > 1 {
            outcome.conflicts.push((task, reqs.clone()));
            state.ledger.contested.insert(task);
            let mut ids = vec![task];
            ids.extend(reqs.iter().copied());
            state.events.push(EventRecord::new(tick, EventKind::Conflict, ids));
        }
        for &a in reqs {
            if a != winner {
                // rejected request: Accept falls back to Idle
                state.agents[a].status = AgentStatus::Idle;
            }
        }
        winners.push((costs.get(winner, slot), winner, task));
    }

    // cheaper winners reserve first
    winners.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(cost, agent, task) in &winners {
        state.tasks[task].status = TaskStatus::Assigned;
        let a = &mut state.agents[agent];
        a.status = AgentStatus::Assign;
        a.assigned_task = Some(task);
        a.task_cost = cost;
        let length = plan_for(state, agent, tick);
        state.ledger.records.push(AssignmentRecord {
            agent,
            task,
            cost,
            path_length: length,
            tick,
        });
        state.events.push(EventRecord::new(tick, EventKind::Assigned, vec![agent, task]));
        outcome.assignments.push((agent, task));
    }
    outcome.assignments.sort();
    state.ledger.decision_steps += 1;
    outcome.rewards = step_rewards(&outcome, state, &state.config.shaping);
    state.check_invariants()?;
    Ok(outcome)
}

/// Per-agent shaping for one decision step; the episode-end bonus is separate.
pub fn step_rewards(outcome: &DecisionOutcome, state: &EpisodeState, shaping: &RewardShaping) -> Vec<f64> {
    let mut r = vec![0.0; state.agents.len()];
    for &(a, _) in &outcome.assignments {
        r[a] += shaping.win_reward;
    }
    for a in outcome.losers() {
        r[a] += shaping.conflict_penalty;
    }
    for &a in &outcome.idle_rejects {
        r[a] += shaping.idle_reject_penalty;
    }
    r
}

/// Bonus paid to every agent at episode end: scale × optimal / achieved over
/// the tasks present at the start, or 0 if any of them was never allocated.
pub fn team_bonus(state: &EpisodeState) -> f64 {
    let initial = state.initial_tasks();
    if initial.iter().any(|&t| state.tasks[t].status == TaskStatus::Waiting) {
        return 0.0;
    }
    let Some(optimal) = state.optimal_initial_total() else {
        return 0.0;
    };
    let achieved: f64 = state
        .ledger
        .records
        .iter()
        .filter(|r| initial.contains(&r.task))
        .map(|r| r.cost)
        .sum();
    let scale = state.config.shaping.team_bonus_scale;
    if achieved <= 0.0 {
        return scale;
    }
    scale * optimal / achieved
}

/// Plans and reserves a path from the agent's cell to its task. Returns the
/// unobstructed path length.
fn plan_for(state: &mut EpisodeState, agent: usize, tick: u64) -> f64 {
    let a = &state.agents[agent];
    let task = a.assigned_task.expect("planning needs a task");
    let (start, goal, model, velocity, cost) = (a.position, state.tasks[task].location, a.kind.motion_model(), a.velocity, a.task_cost);
    let base = match state.cache.path(&state.grid, start, goal, model) {
        Some(p) => p.clone(),
        None => Path::new(vec![start, start]),
    };
    let occupied: HashSet<Cell> = state
        .agents
        .iter()
        .filter(|o| o.id != agent && o.is_parked())
        .map(|o| o.position)
        .collect();
    state.reservations.release_agent(agent);
    let req = PathRequest { agent, cost, velocity, model, path: base.clone() };
    let resolved = resolve_one(&state.grid, &req, &mut state.reservations, tick, &occupied);
    if resolved.replanned {
        state.events.push(EventRecord::new(tick, EventKind::Replanned, vec![agent]));
    }
    let a = &mut state.agents[agent];
    a.schedule = resolved.path.schedule(velocity, tick);
    a.current_path = Some(resolved.path);
    a.path_pos = 0;
    for other in resolved.evicted {
        state.events.push(EventRecord::new(tick, EventKind::Replanned, vec![other]));
        plan_for(state, other, tick);
    }
    base.length()
}

/// Moves every Assign agent along its reserved path for `dt` seconds.
///
/// Agents move in ascending task-cost order. A mover whose next cell holds
/// another agent stays put and replans from the current tick.
pub fn advance(state: &mut EpisodeState, dt: f64) -> Vec<EventRecord> {
    let first_event = state.events.len();
    if !(dt > 0.0) {
        return Vec::new();
    }
    let from = state.tick();
    state.clock += dt;
    let to = state.tick();
    let mut moved = false;
    for t in from + 1..=to {
        let mut order: Vec<usize> = state
            .agents
            .iter()
            .filter(|a| a.status == AgentStatus::Assign && a.current_path.is_some())
            .map(|a| a.id)
            .collect();
        order.sort_by(|&a, &b| state.agents[a].task_cost.total_cmp(&state.agents[b].task_cost).then(a.cmp(&b)));
        for id in order {
            moved |= step_agent(state, id, t);
        }
        state.reservations.release_before(t);
    }
    if moved {
        state.invalidate_costs();
    }
    state.events[first_event..].to_vec()
}

fn step_agent(state: &mut EpisodeState, id: usize, t: u64) -> bool {
    let mut moved = false;
    loop {
        let a = &state.agents[id];
        let path = a.current_path.as_ref().expect("mover has a path");
        let next = a.path_pos + 1;
        if next >= path.cells().len() || a.schedule[next] > t {
            break;
        }
        let cell = path.cells()[next];
        if cell == a.position {
            state.agents[id].path_pos = next;
            continue;
        }
        if state.agents.iter().any(|o| o.id != id && o.position == cell) {
            state.events.push(EventRecord::new(t, EventKind::Waited, vec![id]));
            state.reservations.release_agent(id);
            plan_for(state, id, t);
            return moved;
        }
        let a = &mut state.agents[id];
        a.position = cell;
        a.path_pos = next;
        moved = true;
    }
    let a = &state.agents[id];
    let task = a.assigned_task.expect("mover holds a task");
    let path_done = a.path_pos + 1 >= a.current_path.as_ref().map_or(0, |p| p.cells().len());
    if a.position == state.tasks[task].location {
        complete(state, id, task, t);
    } else if path_done {
        plan_for(state, id, t);
    }
    moved
}

fn complete(state: &mut EpisodeState, id: usize, task: usize, t: u64) {
    let slot = state.tasks[task].slot;
    state.tasks[task].status = TaskStatus::Done;
    state.slots[slot] = None;
    state.reservations.release_agent(id);
    let a = &mut state.agents[id];
    a.status = AgentStatus::Complete;
    state.events.push(EventRecord::new(t, EventKind::Completed, vec![id, task]));
    a.status = AgentStatus::Idle;
    a.assigned_task = None;
    a.current_path = None;
    a.schedule.clear();
    a.path_pos = 0;
    a.task_cost = 0.0;
}

/// Adds one Waiting task per elapsed spawn interval while the active count is
/// below the cap. Returns the new task ids.
pub fn spawn_tasks(state: &mut EpisodeState) -> Vec<usize> {
    let Some(interval) = state.config.task_interval else {
        return Vec::new();
    };
    let mut created = Vec::new();
    while state.clock + 1e-9 >= state.next_spawn {
        state.next_spawn += interval;
        let active = state.active_tasks();
        let Some(slot) = state.slots.iter().position(|s| s.is_none()) else {
            continue;
        };
        if active >= state.config.max_active_tasks {
            continue;
        }
        let taken: HashSet<Cell> = state
            .tasks
            .iter()
            .filter(|t| t.status != TaskStatus::Done)
            .map(|t| t.location)
            .chain(state.agents.iter().map(|a| a.position))
            .collect();
        let free: Vec<Cell> = state.spawn_cells.iter().copied().filter(|c| !taken.contains(c)).collect();
        if free.is_empty() {
            continue;
        }
        let location = free[state.rng.gen_range(0..free.len())];
        let id = state.tasks.len();
        state.tasks.push(TaskState {
            id,
            location,
            status: TaskStatus::Waiting,
            spawn_time: state.clock,
            slot,
        });
        state.slots[slot] = Some(id);
        state.events.push(EventRecord::new(state.tick(), EventKind::Spawned, vec![id]));
        created.push(id);
    }
    if !created.is_empty() {
        state.invalidate_costs();
    }
    created
}
