use serde::{Deserialize, Serialize};

use super::{reference, BenchError, ScenarioSpec};
use crate::assign::hungarian;
use crate::pathplan::{plan, Planner};
use crate::world::init_episode;

/// One optimally assigned (agent, task) pair planned by both planners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerInstance {
    pub n_agents: usize,
    pub episode: usize,
    pub agent: usize,
    pub task: usize,
    pub astar_length: f64,
    /// `None` when the sampler found no path within its iteration budget.
    pub rrt_star_length: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerRow {
    pub n_agents: usize,
    pub instances: usize,
    pub astar_mean_length: f64,
    /// Mean over instances both planners solved.
    pub rrt_star_mean_length: f64,
    pub rrt_star_failures: usize,
    pub ref_astar: Option<f64>,
    pub ref_rrt_star: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerReport {
    pub rows: Vec<PlannerRow>,
    pub instances: Vec<PlannerInstance>,
}

pub const PLANNER_HEADER: &str = "n_agents,instances,astar_mean_length,rrt_star_mean_length,rrt_star_failures,ref_astar,ref_rrt_star";

impl PlannerReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{PLANNER_HEADER}\n");
        for r in &self.rows {
            out += &format!(
                "{},{},{:.6},{:.6},{},{},{}\n",
                r.n_agents,
                r.instances,
                r.astar_mean_length,
                r.rrt_star_mean_length,
                r.rrt_star_failures,
                opt(r.ref_astar),
                opt(r.ref_rrt_star)
            );
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Plans every optimally assigned pair of each scenario episode with A* and
/// RRT* on the same grid.
pub fn planner_compare(spec: &ScenarioSpec) -> Result<PlannerReport, BenchError> {
    spec.validate()?;
    let mut rows = Vec::new();
    let mut instances = Vec::new();
    for &n in &spec.n_agents {
        let world = spec.world_for(n);
        let mut batch = Vec::new();
        for ep in 0..spec.episodes {
            let state = init_episode(&world, spec.episode_seed(n, ep))?;
            let a = hungarian(state.initial_costs())?;
            for &(agent, slot) in a.pairs() {
                let task = state.slots[slot].expect("initial slots hold tasks");
                let ag = &state.agents[agent];
                let (start, goal, model) = (ag.position, state.tasks[task].location, ag.kind.motion_model());
                let astar = plan(&state.grid, start, goal, model, Planner::Astar, &world.rrt, state.seed)
                    .map_err(|e| BenchError::Config(format!("assigned pair unreachable: {e}")))?;
                let rrt = plan(&state.grid, start, goal, model, Planner::RrtStar, &world.rrt, state.seed).ok();
                batch.push(PlannerInstance {
                    n_agents: n,
                    episode: ep,
                    agent,
                    task,
                    astar_length: astar.length(),
                    rrt_star_length: rrt.map(|p| p.length()),
                });
            }
        }
        let solved: Vec<&PlannerInstance> = batch.iter().filter(|i| i.rrt_star_length.is_some()).collect();
        let mean = |xs: Vec<f64>| if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
        let (pa, pr) = reference::path_lengths(n).unzip();
        rows.push(PlannerRow {
            n_agents: n,
            instances: batch.len(),
            astar_mean_length: mean(batch.iter().map(|i| i.astar_length).collect()),
            rrt_star_mean_length: mean(solved.iter().filter_map(|i| i.rrt_star_length).collect()),
            rrt_star_failures: batch.len() - solved.len(),
            ref_astar: pa,
            ref_rrt_star: pr,
        });
        instances.extend(batch);
    }
    Ok(PlannerReport { rows, instances })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn astar_never_longer_and_deterministic() {
        let spec = ScenarioSpec {
            n_agents: vec![4],
            episodes: 3,
            grid_dims: Some([20, 20, 6]),
            ..Default::default()
        };
        let a = planner_compare(&spec).unwrap();
        assert_eq!(a.rows[0].instances, 12);
        for i in &a.instances {
            if let Some(r) = i.rrt_star_length {
                assert!(i.astar_length <= r);
            }
        }
        assert_eq!(a, planner_compare(&spec).unwrap());
        assert!(a.to_csv().starts_with(PLANNER_HEADER));
    }
}
