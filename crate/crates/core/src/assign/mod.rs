//! Centralized and heuristic allocators over a [`CostMatrix`].

mod baselines;
mod hungarian;
mod matrix;

pub use baselines::{brute_force, greedy, greedy_per_agent, random_assign, BRUTE_FORCE_MAX_DIM};
pub use hungarian::hungarian;
pub use matrix::{total_cost, Assignment, CostMatrix};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AssignError {
    #[error("{len} entries do not fill a {rows}x{cols} matrix")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("rows have different lengths")]
    Ragged,
    #[error("cost entry {0} is negative or NaN")]
    BadEntry(f64),
    #[error("no feasible matching covers agent {0}")]
    InfeasibleAgent(usize),
    #[error("no feasible matching covers task {0}")]
    InfeasibleTask(usize),
    #[error("agent {0} appears twice")]
    DuplicateAgent(usize),
    #[error("task {0} appears twice")]
    DuplicateTask(usize),
    #[error("pair ({agent}, {task}) outside the matrix")]
    OutOfBounds { agent: usize, task: usize },
    #[error("pair ({agent}, {task}) has infinite cost")]
    InfeasiblePair { agent: usize, task: usize },
    #[error("{rows}x{cols} is too large for exhaustive search")]
    TooLarge { rows: usize, cols: usize },
}

/// Which allocator a baseline run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyVariant {
    /// Repeatedly take the globally cheapest remaining pair.
    GlobalMin,
    /// Agents in id order take their cheapest remaining task.
    PerAgent,
}
