use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::astar::astar;
use super::grid::{Cell, Grid, MotionModel};
use super::path::{path_cost, Path};
use super::rrt::{rrt_star, RrtParams};
use super::PlanError;
use crate::assign::CostMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    #[default]
    Astar,
    RrtStar,
}

/// What the cost model needs to know about one agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mover {
    pub cell: Cell,
    pub model: MotionModel,
    pub velocity: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pair seed so sampling-based plans do not depend on query order.
pub fn pair_seed(seed: u64, start: Cell, goal: Cell) -> u64 {
    [start.x, start.y, start.z, goal.x, goal.y, goal.z]
        .iter()
        .fold(splitmix(seed), |h, &v| splitmix(h ^ (v as u32 as u64)))
}

pub fn plan(
    grid: &Grid,
    start: Cell,
    goal: Cell,
    model: MotionModel,
    planner: Planner,
    rrt: &RrtParams,
    seed: u64,
) -> Result<Path, PlanError> {
    match planner {
        Planner::Astar => astar(grid, start, goal, model, None),
        Planner::RrtStar => rrt_star(grid, start, goal, model, rrt, pair_seed(seed, start, goal)),
    }
}

/// Memoized unconstrained plans for a fixed grid.
#[derive(Clone, Debug)]
pub struct PathCache {
    planner: Planner,
    rrt: RrtParams,
    seed: u64,
    paths: HashMap<(Cell, Cell, MotionModel), Option<Path>>,
}

impl PathCache {
    pub fn new(planner: Planner, rrt: RrtParams, seed: u64) -> Self {
        Self {
            planner,
            rrt,
            seed,
            paths: HashMap::new(),
        }
    }

    pub fn planner(&self) -> Planner {
        self.planner
    }

    pub fn path(&mut self, grid: &Grid, start: Cell, goal: Cell, model: MotionModel) -> Option<&Path> {
        let (planner, rrt, seed) = (self.planner, self.rrt, self.seed);
        self.paths
            .entry((start, goal, model))
            .or_insert_with(|| plan(grid, start, goal, model, planner, &rrt, seed).ok())
            .as_ref()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Travel-time matrix: agents by task slots, `+inf` for empty slots and
/// unreachable pairs.
pub fn pairwise_costs(grid: &Grid, movers: &[Mover], tasks: &[Option<Cell>], cache: &mut PathCache) -> CostMatrix {
    let mut c = CostMatrix::filled(movers.len(), tasks.len(), f64::INFINITY);
    for (i, m) in movers.iter().enumerate() {
        for (j, t) in tasks.iter().enumerate() {
            let Some(goal) = t else { continue };
            if let Some(p) = cache.path(grid, m.cell, *goal, m.model) {
                c.set(i, j, path_cost(p.length(), m.velocity).unwrap_or(f64::INFINITY));
            }
        }
    }
    c
}
