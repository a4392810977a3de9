use std::collections::{BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::events::EventRecord;
use super::{
    AgentKind, AgentState, AgentStatus, TaskState, TaskStatus, WorldConfig, WorldError, SENTINEL_COST,
};
use crate::assign::{hungarian, total_cost, CostMatrix};
use crate::pathplan::{pairwise_costs, Cell, Grid, Mover, MotionModel, PathCache, ReservationTable};

/// One granted (agent, task) pair and its travel-time estimate at grant time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub agent: usize,
    pub task: usize,
    pub cost: f64,
    pub path_length: f64,
    pub tick: u64,
}

/// What happened to tasks over an episode; feeds the benchmark metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationLedger {
    pub records: Vec<AssignmentRecord>,
    /// Tasks that were requested by two or more agents in one decision step.
    pub contested: BTreeSet<usize>,
    pub decision_steps: usize,
}

impl AllocationLedger {
    pub fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    pub fn holder_of(&self, task: usize) -> Option<usize> {
        self.records.iter().find(|r| r.task == task).map(|r| r.agent)
    }
}

/// Full world snapshot. Mutated only through the world operations.
#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub config: WorldConfig,
    pub seed: u64,
    /// Seconds since the episode started.
    pub clock: f64,
    pub agents: Vec<AgentState>,
    pub tasks: Vec<TaskState>,
    pub grid: Grid,
    pub reservations: ReservationTable,
    /// Task id held by each policy slot.
    pub slots: Vec<Option<usize>>,
    pub ledger: AllocationLedger,
    pub events: Vec<EventRecord>,
    pub done: bool,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) cache: PathCache,
    pub(crate) costs: Option<CostMatrix>,
    pub(crate) spawn_cells: Vec<Cell>,
    pub(crate) next_spawn: f64,
    initial_costs: CostMatrix,
    initial_tasks: Vec<usize>,
}

/// Places agents, tasks and obstacles for a fresh episode.
///
/// Tasks sit on the ground plane inside its largest connected region, so every
/// agent kind can reach every task. Deterministic in `seed`.
pub fn init_episode(config: &WorldConfig, seed: u64) -> Result<EpisodeState, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = config.grid_dims;
    let mut grid = Grid::new(dims);
    if config.obstacle_density > 0.0 {
        for i in 0..grid.n_cells() {
            if rng.gen::<f64>() < config.obstacle_density {
                let c = grid.cell_at(i);
                grid.set_blocked(&c, true);
            }
        }
    }

    let ground_mask = grid.largest_ground_component();
    let ground_cells: Vec<Cell> = (0..dims[0] * dims[1])
        .filter(|&i| ground_mask[i])
        .map(|i| grid.cell_at(i))
        .collect();
    let n_ground = config.agent_mix.ground;
    let needed_ground = config.n_tasks_initial + n_ground;
    if ground_cells.len() < needed_ground.max(1) {
        return Err(WorldError::Placement {
            needed: needed_ground.max(1),
            available: ground_cells.len(),
        });
    }
    let picked: Vec<Cell> = sample(&mut rng, ground_cells.len(), needed_ground)
        .into_iter()
        .map(|i| ground_cells[i])
        .collect();
    let (task_cells, ground_agent_cells) = picked.split_at(config.n_tasks_initial);
    let mut used: HashSet<Cell> = picked.iter().copied().collect();

    let aerial_mask = grid.reachable_from(ground_cells[0], MotionModel::Aerial6);
    let z_lo = if dims[2] > 1 { 1 } else { 0 };
    let mut aerial_cells = Vec::with_capacity(config.agent_mix.aerial);
    let mut tries = 0usize;
    while aerial_cells.len() < config.agent_mix.aerial {
        tries += 1;
        if tries > 1000 * (config.agent_mix.aerial + 1) + grid.n_cells() {
            return Err(WorldError::Placement {
                needed: config.agent_mix.aerial,
                available: aerial_cells.len(),
            });
        }
        let c = Cell::new(
            rng.gen_range(0..dims[0] as i32),
            rng.gen_range(0..dims[1] as i32),
            rng.gen_range(z_lo..dims[2] as i32),
        );
        if aerial_mask[grid.index(&c)] && used.insert(c) {
            aerial_cells.push(c);
        }
    }

    let mut agents = Vec::with_capacity(config.n_agents);
    for (k, cell) in ground_agent_cells.iter().chain(aerial_cells.iter()).enumerate() {
        let kind = if k < n_ground { AgentKind::Ground } else { AgentKind::Aerial };
        let velocity = match kind {
            AgentKind::Ground => config.ground_velocity,
            AgentKind::Aerial => config.aerial_velocity,
        };
        agents.push(AgentState {
            id: k,
            kind,
            position: *cell,
            velocity,
            status: AgentStatus::Idle,
            assigned_task: None,
            current_path: None,
            schedule: Vec::new(),
            path_pos: 0,
            task_cost: 0.0,
        });
    }
    let mut slots = vec![None; config.m_max()];
    let tasks: Vec<TaskState> = task_cells
        .iter()
        .enumerate()
        .map(|(id, c)| {
            slots[id] = Some(id);
            TaskState {
                id,
                location: *c,
                status: TaskStatus::Waiting,
                spawn_time: 0.0,
                slot: id,
            }
        })
        .collect();

    let mut state = EpisodeState {
        config: config.clone(),
        seed,
        clock: 0.0,
        agents,
        initial_tasks: tasks.iter().map(|t| t.id).collect(),
        tasks,
        grid,
        reservations: ReservationTable::new(),
        slots,
        ledger: AllocationLedger::default(),
        events: Vec::new(),
        done: false,
        rng,
        cache: PathCache::new(config.planner, config.rrt, seed),
        costs: None,
        spawn_cells: ground_cells,
        next_spawn: config.task_interval.unwrap_or(f64::INFINITY),
        initial_costs: CostMatrix::filled(0, 0, 0.0),
    };
    state.initial_costs = state.refresh_costs().select_tasks(&(0..config.n_tasks_initial).collect::<Vec<_>>());
    Ok(state)
}

impl EpisodeState {
    pub fn tick(&self) -> u64 {
        (self.clock + 1e-9).floor() as u64
    }

    pub fn m_max(&self) -> usize {
        self.config.m_max()
    }

    pub fn agent(&self, id: usize) -> Result<&AgentState, WorldError> {
        self.agents.get(id).ok_or(WorldError::UnknownAgent(id))
    }

    pub fn task(&self, id: usize) -> &TaskState {
        &self.tasks[id]
    }

    pub fn movers(&self) -> Vec<Mover> {
        self.agents
            .iter()
            .map(|a| Mover {
                cell: a.position,
                model: a.kind.motion_model(),
                velocity: a.velocity,
            })
            .collect()
    }

    /// Location of the live (not Done) task in each slot.
    pub fn slot_cells(&self) -> Vec<Option<Cell>> {
        self.slots
            .iter()
            .map(|s| s.map(|t| self.tasks[t].location))
            .collect()
    }

    pub fn slot_task(&self, slot: usize) -> Option<&TaskState> {
        self.slots.get(slot).copied().flatten().map(|t| &self.tasks[t])
    }

    /// Recomputes (memoized) travel times from current agent cells to every slot.
    pub fn refresh_costs(&mut self) -> &CostMatrix {
        let movers = self.movers();
        let cells = self.slot_cells();
        let c = pairwise_costs(&self.grid, &movers, &cells, &mut self.cache);
        self.costs = Some(c);
        self.costs.as_ref().unwrap()
    }

    pub fn ensure_costs(&mut self) -> &CostMatrix {
        if self.costs.is_none() {
            self.refresh_costs();
        }
        self.costs.as_ref().unwrap()
    }

    pub fn invalidate_costs(&mut self) {
        self.costs = None;
    }

    /// Costs from the last refresh, or freshly planned ones.
    pub fn costs(&self) -> CostMatrix {
        match &self.costs {
            Some(c) => c.clone(),
            None => crate::pathplan::cost_matrix(self, self.config.planner),
        }
    }

    pub fn cached_costs(&self) -> Option<&CostMatrix> {
        self.costs.as_ref()
    }

    /// Cost matrix over the tasks present at t = 0.
    pub fn initial_costs(&self) -> &CostMatrix {
        &self.initial_costs
    }

    pub fn initial_tasks(&self) -> &[usize] {
        &self.initial_tasks
    }

    /// Optimal assignment total on the initial matrix, if one exists.
    pub fn optimal_initial_total(&self) -> Option<f64> {
        let a = hungarian(&self.initial_costs).ok()?;
        total_cost(&self.initial_costs, &a).ok()
    }

    pub fn any_waiting(&self) -> bool {
        self.tasks.iter().any(|t| t.status == TaskStatus::Waiting)
    }

    /// A decision step is due when some Idle agent could claim a Waiting task.
    pub fn needs_decision(&self) -> bool {
        !self.done && self.any_waiting() && self.agents.iter().any(|a| a.status == AgentStatus::Idle)
    }

    pub fn all_assigned(&self) -> bool {
        self.tasks.iter().all(|t| t.status != TaskStatus::Waiting)
    }

    pub fn is_terminal(&self) -> bool {
        let cap = self.tick() >= self.config.max_ticks;
        if self.config.is_dynamic() {
            cap
        } else {
            cap || self.tasks.iter().all(|t| t.status == TaskStatus::Done)
        }
    }

    pub fn active_tasks(&self) -> usize {
        self.tasks.iter().filter(|t| t.status != TaskStatus::Done).count()
    }

    /// Checks that no task is held by two agents and status fields agree.
    pub fn check_invariants(&self) -> Result<(), WorldError> {
        let mut held = HashSet::new();
        for a in &self.agents {
            let should_hold = matches!(a.status, AgentStatus::Assign | AgentStatus::Complete);
            if should_hold != a.assigned_task.is_some() {
                return Err(WorldError::Invariant(format!("agent {} status {:?} vs task {:?}", a.id, a.status, a.assigned_task)));
            }
            if a.kind == AgentKind::Ground && a.position.z != 0 {
                return Err(WorldError::Invariant(format!("ground agent {} left the plane", a.id)));
            }
            if let Some(t) = a.assigned_task {
                if !held.insert(t) {
                    return Err(WorldError::Invariant(format!("task {t} held by two agents")));
                }
            }
        }
        let mut cells = HashSet::new();
        for a in &self.agents {
            if !cells.insert(a.position) {
                return Err(WorldError::Invariant(format!("two agents share cell {}", a.position)));
            }
        }
        Ok(())
    }
}

/// `[status, c_1 .. c_m]`: costs normalized by the config scale and capped at
/// 1; slots without a Waiting task reachable by this agent carry the sentinel.
pub fn local_observation(state: &EpisodeState, agent_id: usize, m_max: usize) -> Result<Vec<f64>, WorldError> {
    let agent = state.agent(agent_id)?;
    let costs = match state.cached_costs() {
        Some(c) => std::borrow::Cow::Borrowed(c),
        None => std::borrow::Cow::Owned(state.costs()),
    };
    let mut obs = Vec::with_capacity(m_max + 1);
    obs.push(agent.status.code());
    for slot in 0..m_max {
        let value = match state.slot_task(slot) {
            Some(t) if t.status == TaskStatus::Waiting && slot < costs.n_tasks() => {
                let c = costs.get(agent_id, slot);
                if c.is_finite() {
                    (c / state.config.cost_scale).min(1.0)
                } else {
                    SENTINEL_COST
                }
            }
            _ => SENTINEL_COST,
        };
        obs.push(value);
    }
    Ok(obs)
}
