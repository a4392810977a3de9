//! Grid world: agents, tasks, lowest-cost arbitration, shaping, and motion.

mod config;
mod episode;
mod events;
mod step;

pub use config::{AgentMix, RewardShaping, WorldConfig};
pub use episode::{init_episode, local_observation, AllocationLedger, AssignmentRecord, EpisodeState};
pub use events::{write_jsonl, EventKind, EventRecord};
pub use step::{advance, arbitrate, spawn_tasks, step_rewards, team_bonus, DecisionOutcome};

use serde::{Deserialize, Serialize};

use crate::pathplan::{Cell, MotionModel, Path};

/// Observation value for a slot without a requestable task.
pub const SENTINEL_COST: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    Ground,
    Aerial,
}

impl AgentKind {
    pub fn motion_model(self) -> MotionModel {
        match self {
            AgentKind::Ground => MotionModel::Ground4,
            AgentKind::Aerial => MotionModel::Aerial6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentStatus {
    Idle,
    Accept,
    Assign,
    Complete,
}

impl AgentStatus {
    /// Evenly spaced scalar in [0, 1] used as one input feature.
    pub fn code(self) -> f64 {
        match self {
            AgentStatus::Idle => 0.0,
            AgentStatus::Accept => 1.0 / 3.0,
            AgentStatus::Assign => 2.0 / 3.0,
            AgentStatus::Complete => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskStatus {
    Waiting,
    Assigned,
    Done,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub kind: AgentKind,
    pub position: Cell,
    /// Meters per second.
    pub velocity: f64,
    pub status: AgentStatus,
    pub assigned_task: Option<usize>,
    pub current_path: Option<Path>,
    /// Tick at which each cell of `current_path` is occupied.
    pub schedule: Vec<u64>,
    /// Index of `position` within `current_path`.
    pub path_pos: usize,
    /// Cost of the held task; lower moves first.
    pub task_cost: f64,
}

impl AgentState {
    /// Not going anywhere: no path, or only holding the current cell.
    pub fn is_parked(&self) -> bool {
        match &self.current_path {
            None => true,
            Some(p) => p.cells()[self.path_pos..].iter().all(|c| *c == self.position),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub id: usize,
    pub location: Cell,
    pub status: TaskStatus,
    /// Seconds.
    pub spawn_time: f64,
    pub slot: usize,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot place {needed} entities: only {available} free cells")]
    Placement { needed: usize, available: usize },
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
}
