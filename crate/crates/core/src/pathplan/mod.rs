//! Grid search, reservations, sampling-based planning, and travel-time costs.

mod astar;
mod cost;
mod grid;
mod path;
mod reservation;
mod resolve;
mod rrt;

pub use astar::{astar, SpaceTime};
pub use cost::{pair_seed, pairwise_costs, plan, Mover, PathCache, Planner};
pub use grid::{Cell, Grid, MotionModel};
pub use path::{move_tick, path_cost, Path};
pub use reservation::{ReservationConflict, ReservationTable};
pub(crate) use resolve::resolve_one;
pub use resolve::{resolve_paths, PathRequest, ResolvedPath};
pub use rrt::{grid_ray, rrt_star, RrtParams};

use crate::assign::CostMatrix;
use crate::world::EpisodeState;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("no path from {start} to {goal}")]
    NoPath { start: Cell, goal: Cell },
    #[error("endpoint {0} is blocked, out of bounds, or not reachable by the motion model")]
    Endpoint(Cell),
    #[error("velocity must be positive, got {0}")]
    Velocity(f64),
    #[error("distance must be nonnegative, got {0}")]
    Distance(f64),
    #[error("planner parameters must be positive")]
    Params,
}

/// Costs from every agent's current cell to every task slot of `state`,
/// planned from scratch (no memoization).
pub fn cost_matrix(state: &EpisodeState, planner: Planner) -> CostMatrix {
    let mut cache = PathCache::new(planner, state.config.rrt, state.seed);
    pairwise_costs(&state.grid, &state.movers(), &state.slot_cells(), &mut cache)
}
