//! Browser bindings: plan paths, solve an assignment, and trace an episode.
//! Every export takes and returns JSON strings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use taskalloc::assign::{greedy, hungarian, random_assign, total_cost, CostMatrix};
use taskalloc::bench::{baseline_actions, Method};
use taskalloc::pathplan::{plan, Planner};
use taskalloc::ppo::DECISION_DT;
use taskalloc::world::{advance, arbitrate, init_episode, spawn_tasks, EpisodeState, WorldConfig};

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub n_agents: usize,
    pub grid: [usize; 3],
    pub obstacle_density: f64,
    pub planner: Planner,
    pub max_ticks: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_agents: 4,
            grid: [30, 30, 8],
            obstacle_density: 0.08,
            planner: Planner::Astar,
            max_ticks: 200,
        }
    }
}

impl DemoConfig {
    fn world(&self) -> WorldConfig {
        let mut w = WorldConfig::static_scenario(self.n_agents);
        w.grid_dims = self.grid;
        w.obstacle_density = self.obstacle_density;
        w.planner = self.planner;
        w.max_ticks = self.max_ticks;
        w
    }
}

#[derive(Serialize)]
struct Scene {
    grid: [usize; 3],
    /// (x, y) of blocked cells on the ground plane.
    ground_obstacles: Vec<[i32; 2]>,
    /// Blocked cells per (x, y) column above the ground plane.
    air_obstacles: Vec<[i32; 3]>,
    agents: Vec<AgentView>,
    tasks: Vec<[i32; 3]>,
}

#[derive(Serialize)]
struct AgentView {
    id: usize,
    kind: String,
    cell: [i32; 3],
    status: String,
    task: Option<usize>,
}

#[derive(Serialize)]
struct PlannedPair {
    agent: usize,
    task: usize,
    cost: f64,
    path: Vec<[i32; 3]>,
    length: f64,
}

#[derive(Serialize)]
struct PlanResult {
    scene: Scene,
    planner: Planner,
    total_cost: f64,
    pairs: Vec<PlannedPair>,
}

fn scene(state: &EpisodeState) -> Scene {
    let [dx, dy, _] = state.grid.dims();
    let mut column = vec![0; dx * dy];
    let mut ground = Vec::new();
    for c in state.grid.blocked_cells() {
        if c.z == 0 {
            ground.push([c.x, c.y]);
        } else {
            column[c.x as usize * dy + c.y as usize] += 1;
        }
    }
    let air = (0..dx * dy)
        .filter(|&i| column[i] > 0)
        .map(|i| [(i / dy) as i32, (i % dy) as i32, column[i]])
        .collect();
    Scene {
        grid: state.grid.dims(),
        ground_obstacles: ground,
        air_obstacles: air,
        agents: state
            .agents
            .iter()
            .map(|a| AgentView {
                id: a.id,
                kind: format!("{:?}", a.kind),
                cell: [a.position.x, a.position.y, a.position.z],
                status: format!("{:?}", a.status),
                task: a.assigned_task,
            })
            .collect(),
        tasks: state.tasks.iter().map(|t| [t.location.x, t.location.y, t.location.z]).collect(),
    }
}

fn parse<T: for<'de> Deserialize<'de> + Default>(text: &str) -> Result<T, String> {
    if text.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(text).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// Builds a random scene, assigns agents to tasks optimally, and returns each
/// pair's unobstructed path from the configured planner.
pub fn plan_paths_json(config: &str, seed: u64) -> Result<String, String> {
    let cfg: DemoConfig = parse(config)?;
    let state = init_episode(&cfg.world(), seed).map_err(|e| e.to_string())?;
    let costs = state.initial_costs();
    let a = hungarian(costs).map_err(|e| e.to_string())?;
    let mut pairs = Vec::new();
    for &(agent, slot) in a.pairs() {
        let ag = &state.agents[agent];
        let task = state.slots[slot].ok_or("empty slot")?;
        let goal = state.tasks[task].location;
        let p = plan(&state.grid, ag.position, goal, ag.kind.motion_model(), cfg.planner, &state.config.rrt, seed)
            .map_err(|e| e.to_string())?;
        pairs.push(PlannedPair {
            agent,
            task,
            cost: costs.get(agent, slot),
            path: p.cells().iter().map(|c| [c.x, c.y, c.z]).collect(),
            length: p.length(),
        });
    }
    to_json(&PlanResult {
        scene: scene(&state),
        planner: cfg.planner,
        total_cost: total_cost(costs, &a).map_err(|e| e.to_string())?,
        pairs,
    })
}

#[derive(Serialize)]
struct AllocationResult {
    method: String,
    pairs: Vec<(usize, usize)>,
    total_cost: f64,
    optimal_cost: f64,
}

fn method_named(name: &str) -> Result<Method, String> {
    match name {
        "hungarian" => Ok(Method::Hungarian),
        "greedy" => Ok(Method::Greedy),
        "random" => Ok(Method::Random),
        other => Err(format!("unknown method {other:?}; expected hungarian, greedy or random")),
    }
}

/// Solves a cost matrix given as a JSON array of rows (agents by tasks).
pub fn allocate_json(matrix: &str, method: &str, seed: u64) -> Result<String, String> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(matrix).map_err(|e| e.to_string())?;
    let c = CostMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
    let a = match method_named(method)? {
        Method::Hungarian => hungarian(&c).map_err(|e| e.to_string())?,
        Method::Greedy => greedy(&c),
        _ => random_assign(&c, seed),
    };
    let opt = hungarian(&c).map_err(|e| e.to_string())?;
    to_json(&AllocationResult {
        method: method.to_string(),
        pairs: a.pairs().to_vec(),
        total_cost: total_cost(&c, &a).map_err(|e| e.to_string())?,
        optimal_cost: total_cost(&c, &opt).map_err(|e| e.to_string())?,
    })
}

#[derive(Serialize)]
struct Frame {
    tick: u64,
    agents: Vec<[i32; 3]>,
    /// Task status per task id: 0 waiting, 1 assigned, 2 done.
    tasks: Vec<u8>,
}

#[derive(Serialize)]
struct Trace {
    scene: Scene,
    method: String,
    frames: Vec<Frame>,
    total_cost: f64,
    conflicts: usize,
    events: Vec<taskalloc::world::EventRecord>,
}

fn frame(state: &EpisodeState) -> Frame {
    use taskalloc::world::TaskStatus;
    Frame {
        tick: state.tick(),
        agents: state.agents.iter().map(|a| [a.position.x, a.position.y, a.position.z]).collect(),
        tasks: state
            .tasks
            .iter()
            .map(|t| match t.status {
                TaskStatus::Waiting => 0,
                TaskStatus::Assigned => 1,
                TaskStatus::Done => 2,
            })
            .collect(),
    }
}

/// Plays a static episode with a baseline allocator and records agent
/// positions every tick.
pub fn episode_trace_json(config: &str, method: &str, seed: u64) -> Result<String, String> {
    let cfg: DemoConfig = parse(config)?;
    let m = method_named(method)?;
    let mut state = init_episode(&cfg.world(), seed).map_err(|e| e.to_string())?;
    let first = scene(&state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = vec![frame(&state)];
    let mut contested = std::collections::BTreeSet::new();
    while !state.is_terminal() {
        if state.needs_decision() {
            state.ensure_costs();
            let (actions, local) = baseline_actions(m, &state, &mut rng).map_err(|e| e.to_string())?;
            contested.extend(local);
            arbitrate(&mut state, &actions).map_err(|e| e.to_string())?;
        }
        advance(&mut state, DECISION_DT);
        spawn_tasks(&mut state);
        state.check_invariants().map_err(|e| e.to_string())?;
        frames.push(frame(&state));
    }
    to_json(&Trace {
        scene: first,
        method: method.to_string(),
        frames,
        total_cost: state.ledger.total_cost(),
        conflicts: contested.len(),
        events: state.events.clone(),
    })
}

#[wasm_bindgen]
pub fn plan_paths(config: &str, seed: u32) -> Result<String, JsError> {
    plan_paths_json(config, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn allocate(matrix: &str, method: &str, seed: u32) -> Result<String, JsError> {
    allocate_json(matrix, method, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn episode_trace(config: &str, method: &str, seed: u32) -> Result<String, JsError> {
    episode_trace_json(config, method, seed as u64).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn plan_paths_returns_one_path_per_agent() {
        let out: Value = serde_json::from_str(&plan_paths_json(r#"{"n_agents": 3, "grid": [16, 16, 4]}"#, 5).unwrap()).unwrap();
        let pairs = out["pairs"].as_array().unwrap();
        assert_eq!(pairs.len(), 3);
        for p in pairs {
            let path = p["path"].as_array().unwrap();
            assert_eq!(path.len() as f64 - 1.0, p["length"].as_f64().unwrap());
        }
        assert!(plan_paths_json("{\"bogus\": 1}", 0).is_err());
    }

    #[test]
    fn allocate_reports_optimum() {
        let m = "[[4, 1, 3], [2, 0, 5], [3, 2, 2]]";
        let h: Value = serde_json::from_str(&allocate_json(m, "hungarian", 0).unwrap()).unwrap();
        assert_eq!(h["total_cost"], 5.0);
        let g: Value = serde_json::from_str(&allocate_json(m, "greedy", 0).unwrap()).unwrap();
        assert!(g["total_cost"].as_f64().unwrap() >= 5.0);
        assert_eq!(g["optimal_cost"], 5.0);
        assert!(allocate_json(m, "auction", 0).is_err());
    }

    #[test]
    fn trace_ends_with_every_task_done() {
        let out: Value = serde_json::from_str(&episode_trace_json(r#"{"grid": [16, 16, 4]}"#, "greedy", 2).unwrap()).unwrap();
        let frames = out["frames"].as_array().unwrap();
        assert!(frames.len() > 2);
        let last = frames.last().unwrap()["tasks"].as_array().unwrap();
        assert!(last.iter().all(|s| s == 2));
    }
}
